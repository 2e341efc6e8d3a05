//! A stand-in model server that echoes the first weak-annotation column.
//!
//! cargo run --example stub_model_server -p weaklab-server
//!
//! Point the annotation service at it with WEAKLAB_MODEL_URL=<printed url>.

use weaklab_server::stub::{start_stub, StubBehavior};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let stub = start_stub(StubBehavior::Echo { column: 0 }).await?;
    println!("{}", stub.url);
    weaklab_server::ctrl_c().await;
    println!("received {} request(s)", stub.raw_requests().len());
    Ok(())
}
