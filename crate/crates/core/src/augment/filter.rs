use serde::{Deserialize, Serialize};

use crate::types::BoundingBox;

/// Minimum box extent and minimum border-to-edge distance, as image fractions.
pub const MIN_FRACTION: f64 = 0.3;

// absorbs decimal round-off such as 0.65 - 0.35 = 0.30000000000000004
const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnreadableImage,
    EmptyImage,
    MalformedBox,
    NoBox,
    MultipleBoxes,
    BoxTooSmall,
    BoxNearEdge,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::UnreadableImage => "unreadable_image",
            RejectReason::EmptyImage => "empty_image",
            RejectReason::MalformedBox => "malformed_box",
            RejectReason::NoBox => "no_box",
            RejectReason::MultipleBoxes => "multiple_boxes",
            RejectReason::BoxTooSmall => "box_too_small",
            RejectReason::BoxNearEdge => "box_near_edge",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Accept,
    Reject(RejectReason),
}

impl FilterDecision {
    pub fn is_accept(&self) -> bool {
        matches!(self, FilterDecision::Accept)
    }
}

/// Keeps images with exactly one box that spans at least 30% of each image
/// dimension and sits at least 30% of each dimension away from every edge.
pub fn filter_record(image_dims: (usize, usize), bboxes: &[BoundingBox]) -> FilterDecision {
    use FilterDecision::Reject;
    let (h, w) = image_dims;
    if h == 0 || w == 0 {
        return Reject(RejectReason::EmptyImage);
    }
    if bboxes.iter().any(|b| b.validate().is_err()) {
        return Reject(RejectReason::MalformedBox);
    }
    let bbox = match bboxes {
        [] => return Reject(RejectReason::NoBox),
        [one] => one,
        _ => return Reject(RejectReason::MultipleBoxes),
    };
    if bbox.width() + EPS < MIN_FRACTION || bbox.height() + EPS < MIN_FRACTION {
        return Reject(RejectReason::BoxTooSmall);
    }
    if bbox.min_margin() + EPS < MIN_FRACTION {
        return Reject(RejectReason::BoxNearEdge);
    }
    FilterDecision::Accept
}
