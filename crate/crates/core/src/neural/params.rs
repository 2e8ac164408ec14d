use std::collections::HashMap;

use super::mat::Mat;

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    /// Source embeddings and encoder layers: the frozen backbone during tuning.
    Encoder,
    Decoder,
    Side,
}

impl Group {
    pub fn of(name: &str) -> Self {
        if name.starts_with("side.") {
            Self::Side
        } else if name.starts_with("enc.") {
            Self::Encoder
        } else {
            Self::Decoder
        }
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    mats: Vec<Mat>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.mats.push(value);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn get(&self, i: usize) -> &Mat {
        &self.mats[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.mats[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Mat> {
        self.index(name).map(|i| &self.mats[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(&self.mats)
    }

    pub fn group(&self, i: usize) -> Group {
        Group::of(&self.names[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.mats.iter().map(|m| m.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.mats.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect()
    }
}
