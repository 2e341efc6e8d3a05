use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::Project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    UnknownDocument,
    BadOffsets,
    SurfaceMismatch,
    UnknownLabel,
    InvalidLabel,
    BadId,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub doc_id: String,
    pub layer: String,
    pub annotation_id: String,
    pub kind: ViolationKind,
    pub reason: String,
}

/// Every invariant violation in the project. Empty iff the project is valid.
pub fn validate(project: &Project) -> Vec<Violation> {
    let mut out = Vec::new();
    for (layer, docs) in &project.layers {
        for (doc_id, anns) in docs {
            let mut push = |ann_id: &str, kind, reason: String| {
                out.push(Violation {
                    doc_id: doc_id.clone(),
                    layer: layer.clone(),
                    annotation_id: ann_id.to_string(),
                    kind,
                    reason,
                })
            };
            let Some(doc) = project.doc(doc_id) else {
                for a in anns {
                    push(&a.id, ViolationKind::UnknownDocument, format!("no document {doc_id:?}"));
                }
                continue;
            };
            let mut ids = HashSet::new();
            for a in anns {
                if a.id_number().is_none() {
                    push(&a.id, ViolationKind::BadId, format!("id {:?} is not T<n>", a.id));
                } else if !ids.insert(a.id.as_str()) {
                    push(&a.id, ViolationKind::DuplicateId, format!("id {} repeated", a.id));
                }
                match doc.slice(a.start, a.end) {
                    Some(s) if a.start < a.end => {
                        if s != a.surface {
                            push(
                                &a.id,
                                ViolationKind::SurfaceMismatch,
                                format!("surface {:?} but text has {:?}", a.surface, s),
                            );
                        }
                    }
                    _ => push(
                        &a.id,
                        ViolationKind::BadOffsets,
                        format!("offsets {}..{} invalid for length {}", a.start, a.end, doc.len()),
                    ),
                }
                if a.label.is_empty() || a.label.chars().any(char::is_whitespace) {
                    push(&a.id, ViolationKind::InvalidLabel, format!("label {:?}", a.label));
                } else if !project.labels.contains(&a.label) {
                    push(&a.id, ViolationKind::UnknownLabel, format!("label {:?} not in project", a.label));
                }
            }
        }
    }
    out
}
