mod common;

use cofact::runtime::AppConfig;
use cofact::sim::SimulationSpec;

#[test]
fn bundled_configs_load_and_validate() {
    std::env::set_var("COFACT_LLM_BASE_URL", "http://127.0.0.1:9/v1");
    std::env::set_var("COFACT_NEWS_SEARCH_URL", "http://127.0.0.1:9/search");
    for name in ["fixture_mock", "fixture_oracle", "remote.example"] {
        let app = AppConfig::load(&common::workspace_file(&format!("configs/{name}.toml"))).unwrap_or_else(|e| panic!("{name}: {e}"));
        app.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let text = std::fs::read_to_string(common::workspace_file("configs/simulation.toml")).unwrap();
    SimulationSpec::from_toml(&text).unwrap().run.validate().unwrap();
}

#[test]
fn a_key_in_the_config_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[dataset]\npath = \"d.jsonl\"\nsplit_cutoff = 0\n\n[llm]\nbackend = \"remote\"\n\n[llm.remote]\napi_key = \"sk-123\"\n").unwrap();
    let err = AppConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("api_key"), "{err}");
}
