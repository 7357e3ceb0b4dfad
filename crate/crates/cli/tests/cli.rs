// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs of the `katena` binary against copies of the core
//! fixtures, on the mock backend.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
        let dir = tempfile::tempdir().unwrap();
        copy_tree(&src, dir.path());
        set_private(&dir.path().join("secrets.yaml"));
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_katena"))
            .current_dir(self.dir.path())
            .env_remove("KATENA_SECRETS")
            .args(args)
            .output()
            .unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn copy_tree(from: &Path, to: &Path) {
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            std::fs::create_dir_all(&target).unwrap();
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

#[cfg(unix)]
fn set_private(path: &Path) {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600)).unwrap();
}

#[cfg(not(unix))]
fn set_private(_: &Path) {}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const DEPLOY_TICKETING: &[&str] = &[
    "deploy",
    "--model",
    "ticketing.yaml",
    "--secrets",
    "secrets.yaml",
    "--json",
];

#[test]
fn plan_matches_golden_json() {
    let ws = Workspace::new();
    let out = ws.run(&["plan", "--model", "voting.yaml", "--json"]);
    assert_eq!(code(&out), 0);
    let golden = include_str!("golden/voting_plan.json");
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
    // Stable across runs.
    let again = ws.run(&["plan", "--model", "voting.yaml", "--json"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), golden);
}

#[test]
fn validate_reports_cycle_with_exit_one() {
    let ws = Workspace::new();
    let out = ws.run(&["validate", "--model", "cycle.yaml", "--json"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violations"][0]["code"], "constructorCycle");
}

#[test]
fn plan_on_cycle_is_a_plan_error() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["plan", "--model", "cycle.yaml"])), 2);
}

#[test]
fn valid_model_validates() {
    let ws = Workspace::new();
    let out = ws.run(&["validate", "--model", "ticketing.yaml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn second_deploy_executes_nothing() {
    let ws = Workspace::new();
    let first = ws.json(DEPLOY_TICKETING);
    assert_eq!(first["executed"], 7);
    assert!(ws.path("ticketing.katena-state.json").exists());
    assert!(ws.path("ticketing.katena-mock.json").exists());
    let second = ws.json(DEPLOY_TICKETING);
    assert_eq!(second["executed"], 0);
    assert_eq!(second["record"], first["record"]);
}

#[test]
fn upgrade_then_destroy() {
    let ws = Workspace::new();
    let deployed = ws.json(DEPLOY_TICKETING);
    let upgraded = ws.json(&[
        "upgrade",
        "math",
        "--model",
        "ticketing.yaml",
        "--secrets",
        "secrets.yaml",
        "--json",
    ]);
    assert_eq!(upgraded["failed"], Value::Null);
    for node in ["math", "utils", "admin", "events"] {
        assert_ne!(
            upgraded["record"]["entries"][node]["address"],
            deployed["record"]["entries"][node]["address"],
            "{node} was redeployed"
        );
    }
    assert_eq!(
        upgraded["record"]["entries"]["tickets"]["address"],
        deployed["record"]["entries"]["tickets"]["address"]
    );

    let destroyed = ws.json(&[
        "destroy",
        "tickets",
        "--model",
        "ticketing.yaml",
        "--secrets",
        "secrets.yaml",
        "--json",
    ]);
    assert_eq!(destroyed["executed"], 1);
    let record = ws.json(&["record", "show", "--model", "ticketing.yaml", "--json"]);
    assert_eq!(record["entries"]["tickets"]["status"], "destroyed");
}

#[test]
fn upgrade_without_record_is_a_usage_error() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "upgrade",
        "math",
        "--model",
        "ticketing.yaml",
        "--secrets",
        "secrets.yaml",
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run deploy first"));
}

#[cfg(unix)]
#[test]
fn world_readable_secrets_are_refused() {
    use std::os::unix::fs::PermissionsExt;
    let ws = Workspace::new();
    let secrets = ws.path("secrets.yaml");
    std::fs::set_permissions(&secrets, std::fs::Permissions::from_mode(0o644)).unwrap();
    let out = ws.run(&[
        "deploy",
        "--model",
        "ticketing.yaml",
        "--secrets",
        "secrets.yaml",
    ]);
    assert_eq!(code(&out), 4);
    assert!(!ws.path("ticketing.katena-state.json").exists());
}

#[test]
fn secrets_path_comes_from_env() {
    let ws = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_katena"))
        .current_dir(ws.dir.path())
        .env("KATENA_SECRETS", ws.path("secrets.yaml"))
        .args(["deploy", "--model", "ticketing.yaml"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn metrics_count_tokens() {
    let ws = Workspace::new();
    let yaml = ws.json(&["metrics", "not", "ens.yaml", "--json"]);
    assert_eq!(yaml["tokens"], 36);
    let js = ws.json(&["metrics", "not", "ens_hardhat.js", "--json"]);
    assert_eq!(js["tokens"], 45);
}

#[test]
fn usage_errors_exit_four() {
    let ws = Workspace::new();
    assert_eq!(code(&ws.run(&["frobnicate"])), 4);
    assert_eq!(code(&ws.run(&["plan"])), 4);
    assert_eq!(code(&ws.run(&["plan", "--model", "missing.yaml"])), 4);
    assert_eq!(
        code(&ws.run(&["metrics", "not", "ens.yaml", "--lang", "cobol"])),
        4
    );
    assert_eq!(
        code(&ws.run(&["record", "show", "--model", "voting.yaml"])),
        4
    );
}

#[test]
fn help_documents_exit_codes() {
    let ws = Workspace::new();
    let out = ws.run(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("Exit codes"));
}
