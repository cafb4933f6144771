//! Helpers for driving the `simexplore` binary: a seeded results file,
//! one-shot runs and a server child process.

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

pub const THETA: f64 = -0.5;

/// Mapping flags matching [`results_csv`].
pub const MAPPING: [&str; 12] = [
    "--estimate",
    "b",
    "--se",
    "se",
    "--true",
    "-0.5",
    "--method",
    "method",
    "--by",
    "dgm",
    "--rep",
    "idrep",
];

pub fn mapping_json() -> Value {
    json!({
        "estimate": "b",
        "se": "se",
        "truth": { "fixed": THETA },
        "method": "method",
        "dgm": ["dgm"],
        "rep": "idrep"
    })
}

/// `n_rep` repetitions for 2 DGMs and 3 methods; a share `missing` of
/// estimates is "NA".
pub fn results_csv(seed: u64, n_rep: usize, missing: f64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut out = String::from("idrep,dgm,method,b,se\n");
    for d in 1..=2 {
        for m in 1..=3 {
            let sd = 0.12 + 0.02 * m as f64 + 0.01 * d as f64;
            for r in 1..=n_rep {
                let b = THETA + 0.01 * (m as f64 - 1.0) + sd * z.sample(&mut rng);
                let se = sd * (1.0 + 0.05 * z.sample(&mut rng));
                let b = if rng.random::<f64>() < missing {
                    "NA".to_string()
                } else {
                    format!("{b}")
                };
                out.push_str(&format!("{r},{d},{m},{b},{se}\n"));
            }
        }
    }
    out
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_simexplore")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("run simexplore")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn write_results(dir: &Path, name: &str, seed: u64, n_rep: usize, missing: f64) -> String {
    let path = dir.join(name);
    std::fs::write(&path, results_csv(seed, n_rep, missing)).unwrap();
    path.to_str().unwrap().to_string()
}

/// `simexplore serve` on an OS-assigned loopback port; killed on drop.
pub struct Server {
    child: Child,
    pub base: String,
}

impl Server {
    pub fn start(extra: &[&str]) -> Server {
        let mut child = Command::new(bin())
            .args(["serve", "--port", "0"])
            .args(extra)
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stderr.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .rsplit_once("http://")
            .unwrap_or_else(|| panic!("unexpected banner: {line:?}"))
            .1
            .to_string();
        Server {
            child,
            base: format!("http://{addr}"),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// Uploads `csv` as a file named `name` and applies the standard mapping.
    pub async fn mapped_session(&self, client: &reqwest::Client, name: &str, csv: &str) -> String {
        let part =
            reqwest::multipart::Part::bytes(csv.as_bytes().to_vec()).file_name(name.to_string());
        let form = reqwest::multipart::Form::new().part("file", part);
        let reply: Value = client
            .post(self.url("/api/datasets"))
            .multipart(form)
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let id = reply["session_id"]
            .as_str()
            .expect("session id")
            .to_string();
        let status = client
            .put(self.url(&format!("/api/datasets/{id}/mapping")))
            .json(&mapping_json())
            .send()
            .await
            .unwrap()
            .status();
        assert_eq!(status, 200);
        id
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
