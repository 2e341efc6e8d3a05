//! Load a Brat standoff directory and report what was read.
//!
//! cargo run --example parse_brat -p weaklab -- [DIR] [--byte-offsets]
//!
//! Without DIR a two-document demo project is written to a temp dir first.

use std::path::PathBuf;

use weaklab::corpus::{validate, OffsetUnit, GOLD_LAYER};
use weaklab::project_dir::{self, LoadOptions};

fn demo_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    let files = [
        ("a.txt", "Résumé: TiO2 films at 450 C.\n"),
        ("a.ann", "T1\tMaterial 8 12\tTiO2\nT2\tNumber 22 25\t450\nR1\tHas Arg1:T1 Arg2:T2\n#1\tNote T1\tchecked\n"),
        ("b.txt", "No entities here."),
    ];
    for (name, body) in files {
        std::fs::write(dir.path().join(name), body).expect("write demo file");
    }
    dir
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mut root = None;
    let mut offsets = OffsetUnit::Chars;
    for a in args.by_ref() {
        match a.as_str() {
            "--byte-offsets" => offsets = OffsetUnit::Bytes,
            _ => root = Some(PathBuf::from(a)),
        }
    }
    let demo = root.is_none().then(demo_dir);
    let root = root.unwrap_or_else(|| demo.as_ref().unwrap().path().to_path_buf());

    let (ws, report) = match project_dir::load(&root, LoadOptions { offsets }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    println!("documents:   {}", report.documents);
    println!("annotations: {}", report.annotations);
    println!("skipped non-T lines: {}", report.total_skipped());
    println!("labels: {:?}", ws.project.labels.iter().collect::<Vec<_>>());
    for id in ws.project.doc_ids() {
        for a in ws.project.annotations(id, GOLD_LAYER) {
            println!("  {id} {} {} [{}, {}) {:?}", a.id, a.label, a.start, a.end, a.surface);
        }
    }
    let violations = validate(&ws.project);
    println!("violations: {}", violations.len());
    for v in violations {
        println!("  {}/{} {}: {}", v.layer, v.doc_id, v.annotation_id, v.reason);
    }
}
