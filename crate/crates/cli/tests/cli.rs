use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const KAWATA: &str = "Kawata et al. (2018)";
const PAPER: &str = "We study the radial migration of stars in a simulated barred disc galaxy.\n\n\
                     Stars near corotation of the spiral arms migrate outward while keeping circular orbits.";

fn bin(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_paperchat"));
    cmd.arg("--mock").arg("--corpus").arg(dir.join("corpus"));
    for (k, _) in std::env::vars() {
        if k.starts_with("PAPERCHAT_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ingest(dir: &Path) -> String {
    let file = dir.join("paper.txt");
    std::fs::write(&file, PAPER).unwrap();
    let out = run(bin(dir)
        .args(["ingest"])
        .arg(&file)
        .args(["--key", KAWATA, "--title", "Radial migration"]));
    assert!(out.status.success(), "{}", stderr(&out));
    stdout(&out).trim().to_string()
}

fn rebuild(dir: &Path) {
    let out = run(bin(dir).args(["index", "rebuild"]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "indexed 2 chunks");
}

#[test]
fn ingest_prints_doc_id() {
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    assert!(id.starts_with("kawata-etal-2018-"), "{id}");
    assert_eq!(id.len(), "kawata-etal-2018-".len() + 8);
    assert!(dir.path().join(format!("corpus/documents/{id}.txt")).exists());
}

#[test]
fn ask_with_scripted_reply_prints_grounded_footer() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path());
    rebuild(dir.path());
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"["Kawata et al. (2018) studied radial migration in barred discs, unlike Smith (2001)."]"#,
    )
    .unwrap();
    let out = run(bin(dir.path())
        .arg("--script")
        .arg(&script)
        .args(["ask", "What did Kawata et al. (2018) study?"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.starts_with("Kawata et al. (2018) studied radial migration"),
        "{text}"
    );
    assert!(text.contains("[grounded] Kawata et al. (2018)\n"), "{text}");
    assert!(text.contains("[ungrounded] Smith (2001)\n"), "{text}");
}

#[test]
fn ask_json_matches_api_payload() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path());
    rebuild(dir.path());
    let out = run(bin(dir.path()).args(["--json", "ask", "Which stars migrate outward?", "--k", "1"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let turn: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(turn["standalone_question"], "Which stars migrate outward?");
    assert_eq!(turn["retrieved"]["hits"].as_array().unwrap().len(), 1);
    assert_eq!(turn["citation_report"]["grounded"][0], KAWATA);
}

#[test]
fn distill_missing_id_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin(dir.path()).args(["distill", "missing-id"]));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("not_found"), "{err}");
}

#[test]
fn distill_report_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    let out = run(bin(dir.path()).args(["distill", &id, "--report"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["accepted"], true);
    assert_eq!(report["original_doc_id"], id.as_str());
    assert!(dir.path().join(format!("corpus/reports/{id}.json")).exists());
}

#[test]
fn ask_without_index_fails_with_code() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path());
    let out = run(bin(dir.path()).args(["ask", "anything"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("index_not_built"));
}

#[test]
fn exhausted_script_reports_stage() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path());
    rebuild(dir.path());
    let script = dir.path().join("script.json");
    std::fs::write(&script, "[]").unwrap();
    let out = run(bin(dir.path()).arg("--script").arg(&script).args(["ask", "q?"]));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("backend_error") && err.contains("generate"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(bin(dir.path()).arg("frobnicate")).status.code(), Some(2));
    assert_eq!(run(bin(dir.path()).args(["ingest", "x.txt"])).status.code(), Some(2));
    assert_eq!(
        run(bin(dir.path()).args(["ask", "q", "--k", "many"])).status.code(),
        Some(2)
    );
}

#[test]
fn chat_repl_shows_intermediate_steps() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path());
    rebuild(dir.path());
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"["According to Kawata et al. (2018), corotation drives migration.",
            "Where do migrating stars end up?",
            "They move outward, see Kawata et al. (2018)."]"#,
    )
    .unwrap();
    let mut child = bin(dir.path())
        .arg("--script")
        .arg(&script)
        .arg("chat")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"What drives migration?\nwhere do they go?\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("standalone question: What drives migration?"), "{text}");
    assert!(
        text.contains("standalone question: Where do migrating stars end up?"),
        "{text}"
    );
    assert!(text.contains(&format!("retrieved: {KAWATA}; {KAWATA}")), "{text}");
    let answer_at = text.find("They move outward").unwrap();
    assert!(text.find("standalone question: Where").unwrap() < answer_at);
}
