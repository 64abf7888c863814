use std::collections::VecDeque;

use super::feature::{cosine_distance, FeatureVector};
use crate::error::{Error, Result};
use crate::types::FrameIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub frame: FrameIndex,
    pub feature: FeatureVector,
}

/// Bounded, insertion-ordered store of a track's most recent features.
#[derive(Debug, Clone)]
pub struct Gallery {
    entries: VecDeque<GalleryEntry>,
    capacity: usize,
}

impl Gallery {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "gallery capacity must be positive");
        Self {
            entries: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `feature`, evicting the oldest entry when full.
    pub fn push(&mut self, frame: FrameIndex, feature: FeatureVector) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(GalleryEntry { frame, feature });
    }

    /// Entries from oldest to newest.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &GalleryEntry> + '_ {
        self.entries.iter()
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureVector> + '_ {
        self.entries.iter().map(|e| &e.feature)
    }

    /// Smallest cosine distance between `f` and any member.
    pub fn distance(&self, f: &FeatureVector) -> Result<f64> {
        self.features()
            .map(|g| cosine_distance(f, g))
            .reduce(f64::min)
            .ok_or(Error::EmptyGallery)
    }

    /// Union of both galleries ordered by frame (stable), keeping the most
    /// recent `capacity` entries.
    pub fn absorb(&mut self, other: &Gallery) {
        let mut all: Vec<GalleryEntry> = self
            .entries
            .drain(..)
            .chain(other.entries.iter().cloned())
            .collect();
        all.sort_by_key(|e| e.frame);
        let skip = all.len().saturating_sub(self.capacity);
        self.entries = all.into_iter().skip(skip).collect();
    }
}

pub fn gallery_distance(f: &FeatureVector, gallery: &Gallery) -> Result<f64> {
    gallery.distance(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(i: usize, dim: usize) -> FeatureVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        FeatureVector::normalized(v).unwrap()
    }

    #[test]
    fn push_and_evict() {
        let mut g = Gallery::new(100);
        assert!(g.is_empty());
        g.push(1, unit(0, 128));
        assert_eq!(g.len(), 1);
        for i in 1..101 {
            g.push(i as u32 + 1, unit(i, 128));
        }
        assert_eq!(g.len(), 100);
        assert!(g.features().all(|f| *f != unit(0, 128)));
        let frames: Vec<u32> = g.entries().map(|e| e.frame).collect();
        assert_eq!(frames, (2..=101).collect::<Vec<_>>());
    }

    #[test]
    fn distance_is_min_over_members() {
        let f = FeatureVector::normalized(vec![1.0, 1.0]).unwrap();
        let neg = FeatureVector::normalized(vec![-1.0, -1.0]).unwrap();
        let mut g = Gallery::new(4);
        assert!(matches!(g.distance(&f), Err(Error::EmptyGallery)));
        g.push(1, unit(0, 2));
        assert_eq!(g.distance(&f).unwrap(), cosine_distance(&f, &unit(0, 2)));
        let mut both = Gallery::new(4);
        both.push(1, f.clone());
        both.push(2, neg);
        assert!(both.distance(&f).unwrap().abs() < 1e-15);
    }

    #[test]
    fn absorb_keeps_most_recent() {
        let mut old = Gallery::new(3);
        old.push(1, unit(0, 8));
        old.push(2, unit(1, 8));
        let mut new = Gallery::new(3);
        new.push(10, unit(2, 8));
        new.push(11, unit(3, 8));
        old.absorb(&new);
        let frames: Vec<u32> = old.entries().map(|e| e.frame).collect();
        assert_eq!(frames, vec![2, 10, 11]);
    }
}
