//! Send documents to a model server and store its spans as a layer.
//!
//! cargo run --example bridge_predict -p weaklab-server

use std::collections::BTreeMap;
use std::time::Duration;

use weaklab::corpus::{Document, LabelSet, Project};
use weaklab::project_dir::Workspace;
use weaklab_server::bridge::WireAnnotation;
use weaklab_server::stub::{start_stub, StubBehavior};
use weaklab_server::{bridge_predict, ProjectStore};

fn wire(label: &str, start: usize, end: usize) -> WireAnnotation {
    WireAnnotation {
        label: label.into(),
        start,
        end,
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut project = Project::new("demo", LabelSet::new(["Material"]));
    project.add_document(Document::new("d1", "TiO2 was heated to 450 C."));
    let dir = tempfile::tempdir()?;
    let store = ProjectStore::create(dir.path(), Workspace {
        project,
        sources: vec![],
        params: None,
    });

    let table = BTreeMap::from([("d1".to_string(), vec![wire("Material", 0, 4), wire("Temperature", 19, 24)])]);
    let stub = start_stub(StubBehavior::Table(table)).await?;
    let client = reqwest::Client::new();
    let docs = vec!["d1".to_string()];

    let out = bridge_predict(&client, &stub.config("demo"), &store, &docs, &[]).await?;
    println!("layer {} changed {} doc(s)", out.layer, out.changed_documents);
    println!("labels first seen from the model: {:?}", out.new_labels);
    for a in store.layer_doc("d1", &out.layer)?.1 {
        println!("  {} {} [{}, {}) {:?}", a.id, a.label, a.start, a.end, a.surface);
    }
    store.flush()?;

    let slow = start_stub(StubBehavior::Delay(Duration::from_secs(2), Box::new(StubBehavior::Echo { column: 0 }))).await?;
    let cfg = slow.config("slow").with_timeout(Duration::from_millis(200));
    match bridge_predict(&client, &cfg, &store, &docs, &[]).await {
        Err(e) => println!("slow server: {e}"),
        Ok(_) => println!("slow server answered in time"),
    }
    Ok(())
}
