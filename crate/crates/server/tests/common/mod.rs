#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use serde_json::Value;
use tempfile::TempDir;

use weaklab::corpus::{Document, LabelSet, Project};
use weaklab::evaluation::{synth_corpus, SynthSpec};
use weaklab::project_dir::{self, LoadOptions, Workspace};
use weaklab_server::{open_root, AppState, Shared};

pub struct Running {
    pub dir: TempDir,
    pub base: String,
    pub state: Shared,
    pub http: reqwest::Client,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(self.url(path)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    pub async fn send(&self, method: reqwest::Method, path: &str, body: &Value) -> (u16, Value) {
        let r = self.http.request(method, self.url(path)).json(body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send(reqwest::Method::POST, path, body).await
    }

    pub async fn put(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send(reqwest::Method::PUT, path, body).await
    }

    /// Polls a job until it finishes.
    pub async fn wait_job(&self, id: u64) -> Value {
        for _ in 0..2000 {
            let (_, s) = self.get(&format!("/jobs/{id}")).await;
            if s["state"] != "running" {
                return s;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {id} did not finish");
    }
}

/// Saves `ws` to a fresh directory and serves it.
pub async fn serve(ws: &Workspace) -> Running {
    let dir = tempfile::tempdir().unwrap();
    project_dir::save(dir.path(), ws).unwrap();
    serve_dir(dir).await
}

pub async fn serve_dir(dir: TempDir) -> Running {
    let stores = open_root(dir.path(), LoadOptions::default()).unwrap();
    let state = AppState::new(stores).into_shared();
    let (addr, _task) = weaklab_server::spawn(state.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    Running {
        dir,
        base: format!("http://{addr}"),
        state,
        http: reqwest::Client::new(),
    }
}

pub fn small_project() -> Workspace {
    let mut p = Project::new("small", LabelSet::new(["Material", "Number"]));
    p.add_document(Document::new("d1", "TiO2 was heated to 450 C, then TiO2 was cooled."));
    p.add_document(Document::new("d2", "ZnO and TiO2 films at 5 %"));
    Workspace {
        project: p,
        sources: vec![],
        params: None,
    }
}

/// A synthetic project whose source layers are `s1`..`s3`.
pub fn synth_workspace(n_docs: usize, tokens: usize) -> Workspace {
    let spec = SynthSpec {
        n_docs,
        tokens_per_doc: tokens,
        ..SynthSpec::default()
    }
    .with_sources(&[("s1", 0.8, 0.3), ("s2", 0.7, 0.3), ("s3", 0.6, 0.3)]);
    Workspace {
        project: synth_corpus(&spec, 0).unwrap().project,
        sources: vec![],
        params: None,
    }
}

pub fn load(dir: &Path) -> Workspace {
    project_dir::load(dir, LoadOptions::default()).unwrap().0
}
