use std::path::Path;
use std::process::{Command, Output};

const TINY_BL: &str = r#"
case = "buckley_leverett"
training = [0.03, 0.065, 0.1]
test_count = 3
n_list = [3, 5]
l_list = [1, 2]
timing_repeats = 1

[mesh]
cells = [4, 4]

[grid]
final_time = 0.2
steps = 4

[m_rule]
kind = "multiple"
factors = [2]
"#;

fn foeim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foeim"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("case.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn staged_pipeline_matches_bench_layout() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_BL);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for stage in ["fom", "pod", "eim", "offline", "online"] {
        let o = foeim(&[stage, "--config", &config, "--out", out]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let online = std::fs::read_to_string(Path::new(out).join("online.csv")).unwrap();
    assert!(online.lines().count() > 1);

    let o = foeim(&["bench", "--config", &config, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["rom.csv", "study.csv", "curves.csv", "report.json", "config.json"] {
        assert!(Path::new(out).join(name).is_file(), "{name}");
    }
}

#[test]
fn later_stage_without_inputs_fails_with_its_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_BL);
    let out = dir.path().join("empty");
    let o = foeim(&["offline", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn invalid_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &TINY_BL.replace("n_list = [3, 5]", "n_list = []"));
    let o = foeim(&["bench", "--config", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = foeim(&["bench", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}
