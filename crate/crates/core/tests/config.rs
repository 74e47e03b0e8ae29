use std::io::Write;

use mmwave_bf::beamformers::RfChainRule;
use mmwave_bf::experiments::{sweep, Axis, ScenarioConfig};

fn write_config(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn file_overlay_merges_nested_fields() {
    let f = write_config(r#"{"k_users": 4, "design": {"rf_chains": "M"}, "power": {"eta": 3.0}}"#);
    let base = ScenarioConfig::default();
    let cfg = base.merged_with_file(f.path()).unwrap();
    assert_eq!(cfg.k_users, 4);
    assert_eq!(cfg.design.rf_chains, RfChainRule::PerStream);
    assert_eq!(cfg.power.eta, 3.0);
    assert_eq!(cfg.power.p_bb_w, base.power.p_bb_w);
    assert_eq!(cfg.n_t, base.n_t);
    assert_ne!(cfg.hash(), base.hash());
}

#[test]
fn unknown_keys_are_rejected() {
    let f = write_config(r#"{"design": {"rf_chain": "M"}}"#);
    assert!(ScenarioConfig::default().merged_with_file(f.path()).is_err());
}

#[test]
fn csv_written_to_disk_round_trips() {
    let cfg = ScenarioConfig { k_users: 2, m_streams: 1, n_r: 4, trials: 2, ..Default::default() };
    let result = sweep(&cfg, Axis::NT, &[8.0, 16.0]).unwrap();
    let f = tempfile::NamedTempFile::new().unwrap();
    result.write_csv(f.reopen().unwrap()).unwrap();
    let text = std::fs::read_to_string(f.path()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "axis,arch,ase_mean,ase_std,gee_mean,gee_std,trials,seed");
    assert_eq!(lines.count(), 2 * cfg.architectures.len());
}
