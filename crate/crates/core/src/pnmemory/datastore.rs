use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::MemoryError;

const MAGIC: &[u8; 4] = b"PNMD";
const VERSION: u32 = 1;

/// Key/value memory of decoder states and the tokens they predicted, with
/// per-token centroid anchors.
///
/// Keys are stored as `f32`; anchors are means over the stored keys computed
/// and kept in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Datastore {
    dim: usize,
    keys: Vec<f32>,
    values: Vec<u32>,
    anchors: BTreeMap<u32, Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<'a> {
    pub index: usize,
    pub key: &'a [f32],
    pub value: u32,
    pub distance: f64,
}

impl Datastore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            keys: Vec::new(),
            values: Vec::new(),
            anchors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self, index: usize) -> &[f32] {
        &self.keys[index * self.dim..(index + 1) * self.dim]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn anchors(&self) -> &BTreeMap<u32, Vec<f64>> {
        &self.anchors
    }

    pub fn push(&mut self, key: &[f64], value: u32) -> Result<(), MemoryError> {
        if key.len() != self.dim {
            return Err(MemoryError::Internal(format!(
                "key dimension {} does not match datastore dimension {}",
                key.len(),
                self.dim
            )));
        }
        self.keys.extend(key.iter().map(|&x| x as f32));
        self.values.push(value);
        Ok(())
    }

    /// Mean of every stored key whose value is `token`.
    pub fn compute_anchor(&self, token: u32) -> Result<Vec<f64>, MemoryError> {
        let mut sum = vec![0.0f64; self.dim];
        let mut n = 0usize;
        for (i, _) in self.values.iter().enumerate().filter(|(_, &v)| v == token) {
            for (s, &k) in sum.iter_mut().zip(self.key(i)) {
                *s += f64::from(k);
            }
            n += 1;
        }
        if n == 0 {
            return Err(MemoryError::Lookup(format!("token {token} not in datastore")));
        }
        sum.iter_mut().for_each(|s| *s /= n as f64);
        Ok(sum)
    }

    /// Recomputes and stores anchors for `tokens` (absent tokens are skipped).
    pub fn refresh_anchors(&mut self, tokens: impl IntoIterator<Item = u32>) {
        for t in tokens {
            if let Ok(anchor) = self.compute_anchor(t) {
                self.anchors.insert(t, anchor);
            }
        }
    }

    /// The `k` nearest entries by Euclidean distance, ascending, ties broken
    /// by insertion order.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor<'_>>, MemoryError> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(MemoryError::Argument(format!(
                "query dimension {} does not match {}",
                query.len(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (euclidean(query, self.key(i)), i))
            .collect();
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by);
        Ok(scored
            .into_iter()
            .map(|(distance, index)| Neighbor {
                index,
                key: self.key(index),
                value: self.values[index],
                distance,
            })
            .collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), MemoryError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for x in self.key(i) {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&self.values[i].to_le_bytes())?;
        }
        w.write_all(&(self.anchors.len() as u32).to_le_bytes())?;
        for (token, anchor) in &self.anchors {
            w.write_all(&token.to_le_bytes())?;
            for x in anchor {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, MemoryError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MemoryError::Format("bad datastore magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(MemoryError::Format(format!("unsupported datastore version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let n = u64::from_le_bytes(buf8) as usize;
        let mut store = Self::new(dim);
        store.keys.reserve(n * dim);
        store.values.reserve(n);
        let mut buf4 = [0u8; 4];
        for _ in 0..n {
            for _ in 0..dim {
                r.read_exact(&mut buf4)?;
                store.keys.push(f32::from_le_bytes(buf4));
            }
            store.values.push(read_u32(&mut r)?);
        }
        let anchors = read_u32(&mut r)?;
        for _ in 0..anchors {
            let token = read_u32(&mut r)?;
            let mut anchor = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut buf8)?;
                anchor.push(f64::from_le_bytes(buf8));
            }
            store.anchors.insert(token, anchor);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, MemoryError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn euclidean(query: &[f64], key: &[f32]) -> f64 {
    query
        .iter()
        .zip(key)
        .map(|(&q, &k)| {
            let d = q - f64::from(k);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Function form of [`Datastore::knn`].
pub fn knn<'a>(
    store: &'a Datastore,
    query: &[f64],
    k: usize,
) -> Result<Vec<Neighbor<'a>>, MemoryError> {
    store.knn(query, k)
}

/// Function form of [`Datastore::compute_anchor`].
pub fn compute_anchor(store: &Datastore, token: u32) -> Result<Vec<f64>, MemoryError> {
    store.compute_anchor(token)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[(&[f64], u32)]) -> Datastore {
        let mut s = Datastore::new(rows[0].0.len());
        for (k, v) in rows {
            s.push(k, *v).unwrap();
        }
        s
    }

    #[test]
    fn knn_examples() {
        let s = store(&[(&[0.0, 0.0], 1), (&[3.0, 4.0], 2)]);
        let r = s.knn(&[3.0, 4.0], 1).unwrap();
        assert_eq!((r[0].value, r[0].distance), (2, 0.0));
        let r = s.knn(&[0.0, 0.0], 2).unwrap();
        let d: Vec<f64> = r.iter().map(|n| n.distance).collect();
        assert_eq!(d, [0.0, 5.0]);
        assert_eq!(s.knn(&[0.0, 0.0], 10).unwrap().len(), 2);
        assert!(Datastore::new(2).knn(&[0.0, 0.0], 3).unwrap().is_empty());
        assert!(s.knn(&[0.0], 1).is_err());
    }

    #[test]
    fn knn_ties_by_insertion() {
        let s = store(&[(&[1.0], 7), (&[-1.0], 8), (&[1.0], 9)]);
        let r = s.knn(&[0.0], 2).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn anchors() {
        let s = store(&[(&[1.0, 0.0], 4), (&[0.0, 1.0], 4), (&[9.0, 9.0], 5)]);
        assert_eq!(s.compute_anchor(4).unwrap(), [0.5, 0.5]);
        assert_eq!(s.compute_anchor(5).unwrap(), [9.0, 9.0]);
        assert!(matches!(s.compute_anchor(6), Err(MemoryError::Lookup(_))));
        let rep = store(&[(&[0.25, -2.0], 1), (&[0.25, -2.0], 1), (&[0.25, -2.0], 1)]);
        assert_eq!(rep.compute_anchor(1).unwrap(), [0.25, -2.0]);
    }

    #[test]
    fn dimension_checked_on_push() {
        let mut s = Datastore::new(3);
        assert!(matches!(s.push(&[1.0], 0), Err(MemoryError::Internal(_))));
    }

    #[test]
    fn binary_round_trip() {
        let mut s = store(&[(&[1.5, -0.25], 4), (&[0.1, 1e-7], 5)]);
        s.refresh_anchors([4, 5, 6]);
        assert_eq!(s.anchors().len(), 2);
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PNMD");
        assert_eq!(Datastore::read_from(buf.as_slice()).unwrap(), s);
        buf[0] = b'X';
        assert!(Datastore::read_from(buf.as_slice()).is_err());
    }
}
