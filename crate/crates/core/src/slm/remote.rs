use serde::{Deserialize, Serialize};

use super::{SlmPrediction, SmallModel};
use crate::corpus::{Label, LabeledItem, NewsItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteSlmConfig {
    /// Service root exposing `POST /train` and `POST /predict`.
    pub base_url: String,
    pub timeout_secs: u64,
}

impl Default for RemoteSlmConfig {
    fn default() -> Self {
        RemoteSlmConfig {
            base_url: "http://localhost:8100".into(),
            timeout_secs: 600,
        }
    }
}

/// Adapter for a classifier served over HTTP, for swapping in a real
/// transformer model.
///
/// `POST /train` takes `{"mode": "pretrain"|"finetune", "examples": [{"id",
/// "text", "label"}]}` and returns `{"version": n}`. `POST /predict` takes
/// `{"texts": [...]}` and returns `{"predictions": [{"label",
/// "confidence"}]}`. The service owns the weights, so checkpoints record
/// only the version.
pub struct RemoteSlm {
    config: RemoteSlmConfig,
    agent: ureq::Agent,
    version: u32,
}

#[derive(Serialize)]
struct TrainExample<'a> {
    id: &'a str,
    text: &'a str,
    label: Label,
}

#[derive(Serialize)]
struct TrainRequest<'a> {
    mode: &'a str,
    examples: Vec<TrainExample<'a>>,
}

#[derive(Deserialize)]
struct TrainResponse {
    version: u32,
}

#[derive(Serialize)]
struct PredictRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct PredictResponse {
    predictions: Vec<SlmPrediction>,
}

impl RemoteSlm {
    pub fn new(config: RemoteSlmConfig) -> Self {
        let agent = crate::sources::http_agent(config.timeout_secs);
        RemoteSlm {
            config,
            agent,
            version: 0,
        }
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, path: &str, body: &Req) -> Result<Resp> {
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| Error::backend("slm", e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::backend("slm", e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Error::backend("slm", format!("{path}: HTTP {status}")));
        }
        serde_json::from_str(&text).map_err(|e| Error::backend("slm", format!("{path}: malformed response: {e}")))
    }

    fn train(&mut self, mode: &str, data: &[LabeledItem]) -> Result<()> {
        let req = TrainRequest {
            mode,
            examples: data
                .iter()
                .map(|d| TrainExample {
                    id: &d.item.id,
                    text: &d.item.text,
                    label: d.label,
                })
                .collect(),
        };
        let resp: TrainResponse = self.post("train", &req)?;
        if resp.version <= self.version {
            return Err(Error::backend(
                "slm",
                format!("service version went from {} to {}", self.version, resp.version),
            ));
        }
        self.version = resp.version;
        Ok(())
    }
}

impl SmallModel for RemoteSlm {
    fn name(&self) -> &str {
        "remote"
    }

    fn pretrain(&mut self, labeled: &[LabeledItem]) -> Result<()> {
        if labeled.is_empty() {
            return Err(Error::Validation("pretraining needs labeled data".into()));
        }
        self.version = 0;
        self.train("pretrain", labeled)
    }

    fn finetune(&mut self, clean: &[LabeledItem]) -> Result<()> {
        if clean.is_empty() {
            log::warn!("fine-tune skipped: no clean data");
            return Ok(());
        }
        self.train("finetune", clean)
    }

    fn predict(&self, item: &NewsItem) -> Result<SlmPrediction> {
        let resp: PredictResponse = self.post(
            "predict",
            &PredictRequest {
                texts: vec![&item.text],
            },
        )?;
        let p = resp
            .predictions
            .into_iter()
            .next()
            .ok_or_else(|| Error::backend("slm", "predict returned no predictions"))?;
        if !(0.5..=1.0).contains(&p.confidence) {
            return Err(Error::backend("slm", format!("confidence {} outside [0.5, 1]", p.confidence)));
        }
        Ok(p)
    }

    fn version(&self) -> u32 {
        self.version
    }

    fn checkpoint(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "format": "cofact-remote-slm",
            "base_url": self.config.base_url,
            "version": self.version,
        }))
    }

    fn restore(&mut self, checkpoint: &serde_json::Value) -> Result<()> {
        if checkpoint["format"] != "cofact-remote-slm" {
            return Err(Error::Validation("not a remote-slm checkpoint".into()));
        }
        self.version = checkpoint["version"]
            .as_u64()
            .ok_or_else(|| Error::Validation("remote-slm checkpoint has no version".into()))? as u32;
        log::warn!("remote SLM restored at version {}; the service must still hold that model", self.version);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::testserver;

    #[test]
    fn train_and_predict_over_http() {
        let server = testserver::serve(|req| {
            if req.request_line.starts_with("POST /train") {
                let v = if req.body.contains("\"pretrain\"") { 1 } else { 2 };
                (200, format!(r#"{{"version":{v}}}"#))
            } else {
                (200, r#"{"predictions":[{"label":"fake","confidence":0.8}]}"#.into())
            }
        });
        let mut slm = RemoteSlm::new(RemoteSlmConfig {
            base_url: server.base.clone(),
            timeout_secs: 5,
        });
        let data = [LabeledItem {
            item: NewsItem::new("a", "text a", "e", 0),
            label: Label::Real,
        }];
        slm.pretrain(&data).unwrap();
        assert_eq!(slm.version(), 1);
        slm.finetune(&data).unwrap();
        assert_eq!(slm.version(), 2);
        let p = slm.predict(&NewsItem::new("b", "text b", "e", 0)).unwrap();
        assert_eq!(p.label, Label::Fake);
        let seen = server.seen.lock().unwrap();
        let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(body["examples"][0]["label"], "real");
        assert_eq!(body["mode"], "pretrain");
    }

    #[test]
    fn service_error_is_backend_error() {
        let server = testserver::serve(|_| (500, "{}".into()));
        let slm = RemoteSlm::new(RemoteSlmConfig {
            base_url: server.base.clone(),
            timeout_secs: 5,
        });
        assert!(matches!(
            slm.predict(&NewsItem::new("b", "t", "e", 0)),
            Err(Error::Backend { .. })
        ));
    }
}
