//! Serve a project directory over HTTP.
//!
//! cargo run --example serve -p weaklab-server -- [ROOT] [PORT]
//!
//! Without ROOT a small synthetic project is written to a temp dir. Set
//! WEAKLAB_MODEL_URL to register a model server under the name `default`.
//!
//! curl localhost:8080/projects
//! curl localhost:8080/docs/doc0/annotations/gold

use std::net::SocketAddr;
use std::path::PathBuf;

use weaklab::evaluation::{synth_corpus, SynthSpec};
use weaklab::project_dir::{self, LoadOptions, Workspace};
use weaklab_server::{open_root, AppState, ModelServerConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = args.next().map(PathBuf::from);
    let port: u16 = args.next().map(|p| p.parse()).transpose()?.unwrap_or(8080);

    let demo = match &root {
        Some(_) => None,
        None => {
            let dir = tempfile::tempdir()?;
            let spec = SynthSpec {
                n_docs: 5,
                tokens_per_doc: 40,
                ..SynthSpec::default()
            };
            let ws = Workspace {
                project: synth_corpus(&spec, 0)?.project,
                sources: vec![],
                params: None,
            };
            project_dir::save(dir.path(), &ws)?;
            Some(dir)
        }
    };
    let root = root.unwrap_or_else(|| demo.as_ref().unwrap().path().to_path_buf());

    let mut state = AppState::new(open_root(&root, LoadOptions::default())?);
    if let Some(cfg) = ModelServerConfig::from_env() {
        state = state.with_model(cfg?);
    }
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("serving {} on http://{}", root.display(), listener.local_addr()?);
    weaklab_server::serve(listener, state.into_shared(), weaklab_server::ctrl_c()).await?;
    Ok(())
}
