//! Every command twice at one worker and once at all cores: identical hashes.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn manifest_hashes(dir: &Path) -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest written");
    let m: serde_json::Value = serde_json::from_str(&text).expect("manifest parses");
    m["files"]
        .as_array()
        .expect("file list")
        .iter()
        .map(|f| (f["name"].as_str().unwrap_or_default().to_string(), f["sha256"].as_str().unwrap_or_default().to_string()))
        .collect()
}

pub fn run() -> (bool, Vec<String>) {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let base = scenarios.join("paper_base.json");
    let zero = scenarios.join("zero.json");
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("solve", vec!["solve".into(), base.display().to_string(), "--mode".into(), "mfc".into()]),
        ("simulate", vec!["simulate".into(), base.display().to_string(), "--paths".into(), "200".into(), "--baseline".into()]),
        ("compare", vec!["compare".into(), base.display().to_string(), "--paths".into(), "1000".into()]),
        ("verify", vec!["verify".into(), zero.display().to_string(), "--skip-nash".into()]),
    ];
    let max = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut ok = true;
    let mut details = Vec::new();
    for (name, args) in &commands {
        let mut runs = Vec::new();
        for (i, threads) in [1, max, 1].into_iter().enumerate() {
            let out = dir.path().join(format!("{name}_{i}"));
            let status = Command::new(env!("CARGO_BIN_EXE_gridmfg"))
                .args(args)
                .arg("--out")
                .arg(&out)
                .env("GRIDMFG_THREADS", threads.to_string())
                .output()
                .expect("binary runs");
            if !status.status.success() {
                ok = false;
                details.push(format!("{name}: exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
                break;
            }
            runs.push(manifest_hashes(&out));
        }
        let same = runs.len() == 3 && !runs[0].is_empty() && runs.iter().all(|r| *r == runs[0]);
        ok &= same;
        details.push(format!(
            "{name}: {} files, {} across 1/{max}/1 workers",
            runs.first().map_or(0, BTreeMap::len),
            if same { "identical hashes" } else { "HASHES DIFFER" }
        ));
    }
    (ok, details)
}
