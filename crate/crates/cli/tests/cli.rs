use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const VID2REAL: &str = "doi:10.18738/T8/VID2RW";
const CODA: &str = "doi:10.18738/T8/CODA01";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// Serves the fixture export records over plain HTTP/1.1, one request per
/// connection.
fn mock_repository() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut line = String::new();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            reader.read_line(&mut line).unwrap();
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            let file = if line.contains("VID2RW") {
                Some("repo/vid2real.json")
            } else if line.contains("CODA01") {
                Some("repo/coda.json")
            } else {
                None
            };
            let (status, body) = match file {
                Some(f) => ("200 OK", std::fs::read_to_string(fixtures().join(f)).unwrap()),
                None => ("404 Not Found", "no such dataset".to_string()),
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    format!("http://{addr}")
}

fn hricat(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hricat")).arg("--store").arg(store).args(args).output().unwrap()
}

/// Configuration carrying the fixture keyword-rule extension.
fn config(dir: &Path) -> String {
    let rules: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("rules_extension.json")).unwrap()).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::json!({ "keyword_rules": rules, "top_k": 3 }).to_string()).unwrap();
    path.display().to_string()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

#[test]
fn catalog_commands() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("catalog.graph");
    let repo = mock_repository();
    let cfg = config(dir.path());
    let hricat = |store: &Path, args: &[&str]| {
        let mut full = vec!["--config", cfg.as_str()];
        full.extend_from_slice(args);
        hricat(store, &full)
    };

    let first: serde_json::Value =
        serde_json::from_str(&ok(hricat(&store, &["harvest", "--repo", &repo, "--doi", VID2REAL]))).unwrap();
    assert!(first["nodes_created"].as_u64().unwrap() > 0);
    let report = fixture("repo/vid2real_report.txt");
    ok(hricat(&store, &["ingest-report", "--doi", VID2REAL, "--report", &report]));
    let coda_report = fixture("repo/coda_report.txt");
    ok(hricat(&store, &["harvest", "--repo", &repo, "--doi", CODA, "--report", &coda_report]));
    let again: serde_json::Value = serde_json::from_str(&ok(hricat(
        &store,
        &["harvest", "--repo", &repo, "--doi", CODA, "--report", &coda_report],
    )))
    .unwrap();
    assert_eq!(again["nodes_created"], 0);

    let listed = ok(hricat(&store, &["datasets"]));
    assert_eq!(listed.lines().count(), 2);

    let spot = ok(hricat(&store, &["query", "--which-datasets", "RobotModel=Boston Dynamics Spot"]));
    assert_eq!(spot.lines().collect::<Vec<_>>(), [format!("{VID2REAL}\tVid2Real HRI: Real-World Study")]);

    let files = ok(hricat(&store, &["locate", VID2REAL, "--filter", "modality=video", "--filter", "session=2"]));
    assert_eq!(files.trim(), "session02/s02_p02_video.mp4");

    let table: serde_json::Value =
        serde_json::from_str(&ok(hricat(&store, &["compare", VID2REAL, CODA, "--facets", "usesControl"]))).unwrap();
    assert_eq!(table["rows"][0]["same"], false);

    let answer = ok(hricat(&store, &["ask", "What type of robot was utilized in Vid2Real Real World?"]));
    assert!(answer.contains("Spot") && answer.contains("hasRobot"), "{answer}");

    let script = ok(hricat(&store, &["manifest", VID2REAL, "--filter", "modality=survey", "--format", "sh"]));
    assert_eq!(script.lines().filter(|l| l.starts_with("curl ")).count(), 2);

    ok(hricat(&store, &["audit", VID2REAL]));
    let failed = hricat(&store, &["audit", CODA]);
    assert!(!failed.status.success());
    assert!(String::from_utf8_lossy(&failed.stdout).contains("publication_linked"));

    let schema: serde_json::Value = serde_json::from_str(&ok(hricat(&store, &["schema"]))).unwrap();
    assert!(schema.to_string().contains("DataFile"));
}

#[test]
fn errors_exit_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("catalog.graph");
    let repo = mock_repository();
    let out = hricat(&store, &["harvest", "--repo", &repo, "--doi", "doi:10.18738/T8/NOPE"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOPE"));
    assert!(!hricat(&store, &["compare", VID2REAL]).status.success());
    assert!(!hricat(&store, &["locate", VID2REAL, "--filter", "novalue"]).status.success());
    assert!(!hricat(&store, &["eval", "--ratings", "x.csv", "--dimension", "Flavour", "--seed", "1"]).status.success());
}

#[test]
fn eval_exports_reproducible_json() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("unused.graph");
    let ratings = fixture("ratings.csv");
    let run = |name: &str| {
        let json = dir.path().join(name);
        let args = [
            "eval",
            "--ratings",
            &ratings,
            "--dimension",
            "IR",
            "--seed",
            "42",
            "--samples",
            "1000",
            "--burnin",
            "100",
        ];
        let mut full: Vec<&str> = args.to_vec();
        let j = json.display().to_string();
        full.extend(["--json", &j, "--adjusted"]);
        let table = ok(hricat(&store, &full));
        (table, std::fs::read_to_string(json).unwrap())
    };
    let (table, a) = run("a.json");
    let (_, b) = run("b.json");
    assert_eq!(a, b);
    assert!(table.contains("alpha[") && table.contains("corrected"), "{table}");
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["dimension"], "InformationRetrieval");
    assert_eq!(v["alpha"].as_object().unwrap().len(), 2);
    assert!(!store.exists());
}

#[test]
fn serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_hricat"))
        .arg("--store")
        .arg(dir.path().join("s.graph"))
        .args(["serve", "--port", &port.to_string()])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let mut body = None;
    for _ in 0..100 {
        if let Ok(mut s) = std::net::TcpStream::connect(("127.0.0.1", port)) {
            write!(s, "GET /datasets HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n").unwrap();
            let mut out = String::new();
            std::io::Read::read_to_string(&mut s, &mut out).unwrap();
            body = Some(out);
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let body = body.expect("service never accepted a connection");
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.trim_end().ends_with("[]"), "{body}");
}
