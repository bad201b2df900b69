/// A face representation produced by a fixed feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Record id, unique within a file.
    pub id: String,
    pub subject_id: Option<String>,
    /// Head yaw in radians, if known.
    pub yaw: Option<f64>,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            id: String::new(),
            subject_id: None,
            yaw: None,
            values,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject_id = Some(subject.into());
        self
    }

    pub fn with_yaw(mut self, yaw: f64) -> Self {
        self.yaw = Some(yaw);
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same metadata, new values.
    pub fn map_values(&self, values: Vec<f64>) -> Self {
        Self {
            id: self.id.clone(),
            subject_id: self.subject_id.clone(),
            yaw: self.yaw,
            values,
        }
    }
}
