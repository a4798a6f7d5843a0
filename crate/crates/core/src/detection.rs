use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Frame index within a stream.
pub type Frame = usize;

/// One candidate box at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub t: Frame,
    pub bbox: BBox<T>,
    /// Re-detection confidence against the first-frame template.
    pub ff_score: T,
    pub embedding: Vec<T>,
    /// Ground-truth identity; only synthetic streams carry it.
    pub object_id: Option<i64>,
    pub det_id: u64,
}

impl<T: Scalar> Detection<T> {
    pub fn new(t: Frame, bbox: BBox<T>, ff_score: T, embedding: Vec<T>, det_id: u64) -> Self {
        Detection {
            t,
            bbox,
            ff_score,
            embedding,
            object_id: None,
            det_id,
        }
    }

    pub fn with_object(mut self, object_id: i64) -> Self {
        self.object_id = Some(object_id);
        self
    }
}
