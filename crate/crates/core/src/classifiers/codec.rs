//! FFM1 model container.
//!
//! ```text
//! "FFM1"  u16 version  u8 scalar width  u8 kind tag
//! u32 n_classes  u64 feature_dim  u64 seed
//! u64 len + UTF-8 JSON TrainConfig
//! u8 has_standardizer [means, stds]
//! kind-specific state
//! ```
//! Integers are little-endian; scalars are stored as `f64`.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fusion::{Standardizer, NUM_CLASSES};
use crate::scalar::Real;

use super::{
    AdaBoostModel, ClassifierKind, Forest, GradBoostModel, KnnModel, ModelState, Node, SvmModel, TrainConfig,
    TrainedModel, Tree,
};

const MAGIC: &[u8; 4] = b"FFM1";
const VERSION: u16 = 1;

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.write_u32::<LE>(v).unwrap();
    }
    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LE>(v).unwrap();
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn real<T: Real>(&mut self, v: T) {
        self.0.write_f64::<LE>(v.widen()).unwrap();
    }
    fn reals<T: Real>(&mut self, v: &[T]) {
        self.len(v.len());
        v.iter().for_each(|&x| self.real(x));
    }
    fn tree<T: Real>(&mut self, t: &Tree<T>) {
        self.len(t.nodes.len());
        for n in &t.nodes {
            match *n {
                Node::Leaf { class, value } => {
                    self.u8(0);
                    self.u32(class as u32);
                    self.real(value);
                }
                Node::Split { feature, threshold, left, right } => {
                    self.u8(1);
                    self.len(feature);
                    self.real(threshold);
                    self.len(left);
                    self.len(right);
                }
            }
        }
    }
    fn trees<T: Real>(&mut self, ts: &[Tree<T>]) {
        self.len(ts.len());
        ts.iter().for_each(|t| self.tree(t));
    }
}

struct Dec<'a>(Cursor<&'a [u8]>);

fn truncated(e: std::io::Error) -> Error {
    Error::ModelFormat(format!("truncated payload ({e})"))
}

impl Dec<'_> {
    fn u8(&mut self) -> Result<u8> {
        self.0.read_u8().map_err(truncated)
    }
    fn u32(&mut self) -> Result<u32> {
        self.0.read_u32::<LE>().map_err(truncated)
    }
    fn u64(&mut self) -> Result<u64> {
        self.0.read_u64::<LE>().map_err(truncated)
    }
    /// A length bounded by the bytes left, so corrupt input cannot trigger
    /// huge allocations.
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        let left = (self.0.get_ref().len() as u64).saturating_sub(self.0.position());
        if v > left {
            return Err(Error::ModelFormat(format!("length {v} exceeds remaining {left} bytes")));
        }
        Ok(v as usize)
    }
    /// A position or feature index; the caller checks its range.
    fn index(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::ModelFormat("index overflows usize".into()))
    }
    fn real<T: Real>(&mut self) -> Result<T> {
        let v = self.0.read_f64::<LE>().map_err(truncated)?;
        T::from_f64(v).ok_or_else(|| Error::ModelFormat(format!("scalar {v} not representable")))
    }
    fn reals<T: Real>(&mut self) -> Result<Vec<T>> {
        let n = self.len()?;
        (0..n).map(|_| self.real()).collect()
    }
    fn class(&mut self) -> Result<usize> {
        let c = self.u32()? as usize;
        if c >= NUM_CLASSES {
            return Err(Error::ModelFormat(format!("class {c} out of range")));
        }
        Ok(c)
    }
    fn tree<T: Real>(&mut self, dim: usize) -> Result<Tree<T>> {
        let n = self.len()?;
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            nodes.push(match self.u8()? {
                0 => Node::Leaf { class: self.class()?, value: self.real()? },
                1 => {
                    let feature = self.index()?;
                    let threshold = self.real()?;
                    let (left, right) = (self.index()?, self.index()?);
                    // Children always follow their parent in preorder.
                    if feature >= dim || left <= i || right <= i || left >= n || right >= n {
                        return Err(Error::ModelFormat("malformed tree node".into()));
                    }
                    Node::Split { feature, threshold, left, right }
                }
                t => return Err(Error::ModelFormat(format!("unknown node tag {t}"))),
            });
        }
        if nodes.is_empty() {
            return Err(Error::ModelFormat("empty tree".into()));
        }
        Ok(Tree { nodes })
    }
    fn trees<T: Real>(&mut self, dim: usize) -> Result<Vec<Tree<T>>> {
        let n = self.len()?;
        (0..n).map(|_| self.tree(dim)).collect()
    }
}

pub fn encode_model<T: Real>(m: &TrainedModel<T>) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.0.extend_from_slice(MAGIC);
    e.0.write_u16::<LE>(VERSION).unwrap();
    e.u8(T::WIDTH);
    e.u8(m.kind.tag());
    e.u32(m.n_classes as u32);
    e.len(m.feature_dim);
    e.u64(m.seed);
    let cfg = serde_json::to_vec(&m.config).expect("config serializes");
    e.len(cfg.len());
    e.0.extend_from_slice(&cfg);
    match &m.standardizer {
        Some(s) => {
            e.u8(1);
            e.reals(&s.means);
            e.reals(&s.stds);
        }
        None => e.u8(0),
    }
    match &m.state {
        ModelState::Knn(k) => {
            e.len(k.k);
            e.len(k.rows.len());
            for (r, &l) in k.rows.iter().zip(&k.labels) {
                e.u32(l as u32);
                r.iter().for_each(|&x| e.real(x));
            }
        }
        ModelState::LinearSvm(s) => {
            e.len(s.weights.len());
            s.weights.iter().for_each(|w| e.reals(w));
        }
        ModelState::RandomForest(f) => e.trees(&f.trees),
        ModelState::Adaboost(a) => {
            e.u32(a.prior as u32);
            e.trees(&a.stumps);
            e.reals(&a.alphas);
            e.reals(&a.stage_errors);
        }
        ModelState::GradBoost(g) => {
            e.reals(&g.init);
            e.real(g.learning_rate);
            e.len(g.trees.len());
            g.trees.iter().for_each(|ts| e.trees(ts));
        }
    }
    e.0
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<TrainedModel<T>> {
    let mut d = Dec(Cursor::new(bytes));
    let mut magic = [0u8; 4];
    d.0.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = d.0.read_u16::<LE>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let width = d.u8()?;
    if width != T::WIDTH {
        return Err(Error::ModelFormat(format!("model stores {width}-byte scalars, reader expects {}", T::WIDTH)));
    }
    let tag = d.u8()?;
    let kind = ClassifierKind::from_tag(tag).ok_or_else(|| Error::ModelFormat(format!("unknown kind tag {tag}")))?;
    let n_classes = d.u32()? as usize;
    if n_classes != NUM_CLASSES {
        return Err(Error::ModelFormat(format!("{n_classes} classes")));
    }
    let feature_dim = d.u64()? as usize;
    let seed = d.u64()?;
    let cfg_len = d.len()?;
    let mut cfg = vec![0u8; cfg_len];
    d.0.read_exact(&mut cfg).map_err(truncated)?;
    let config: TrainConfig =
        serde_json::from_slice(&cfg).map_err(|e| Error::ModelFormat(format!("config echo: {e}")))?;
    let standardizer = match d.u8()? {
        0 => None,
        1 => {
            let s = Standardizer { means: d.reals()?, stds: d.reals()? };
            if s.means.len() != feature_dim || s.stds.len() != feature_dim {
                return Err(Error::ModelFormat("standardizer dimension".into()));
            }
            Some(s)
        }
        f => return Err(Error::ModelFormat(format!("bad standardizer flag {f}"))),
    };
    let state = match kind {
        ClassifierKind::Knn => {
            let k = d.len()?;
            let n = d.len()?;
            let mut rows = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                labels.push(d.class()?);
                rows.push((0..feature_dim).map(|_| d.real()).collect::<Result<Vec<T>>>()?);
            }
            if k == 0 || k > n {
                return Err(Error::ModelFormat(format!("k = {k} with {n} rows")));
            }
            ModelState::Knn(KnnModel { k, rows, labels })
        }
        ClassifierKind::LinearSvm => {
            let n = d.len()?;
            let weights = (0..n).map(|_| d.reals()).collect::<Result<Vec<Vec<T>>>>()?;
            if n != NUM_CLASSES || weights.iter().any(|w| w.len() != feature_dim + 1) {
                return Err(Error::ModelFormat("svm weight shape".into()));
            }
            ModelState::LinearSvm(SvmModel { weights })
        }
        ClassifierKind::RandomForest => ModelState::RandomForest(Forest { trees: d.trees(feature_dim)? }),
        ClassifierKind::Adaboost => {
            let prior = d.class()?;
            let stumps = d.trees(feature_dim)?;
            let alphas = d.reals()?;
            let stage_errors = d.reals()?;
            if alphas.len() != stumps.len() {
                return Err(Error::ModelFormat("stage count".into()));
            }
            ModelState::Adaboost(AdaBoostModel { stumps, alphas, stage_errors, prior })
        }
        ClassifierKind::GradBoost => {
            let init = d.reals()?;
            let learning_rate = d.real()?;
            let n = d.len()?;
            let trees = (0..n).map(|_| d.trees(feature_dim)).collect::<Result<Vec<_>>>()?;
            if init.len() != NUM_CLASSES || n != NUM_CLASSES {
                return Err(Error::ModelFormat("boosting shape".into()));
            }
            ModelState::GradBoost(GradBoostModel { init, learning_rate, trees })
        }
    };
    if (d.0.position() as usize) != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    Ok(TrainedModel { kind, config, n_classes, feature_dim, seed, standardizer, state })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_model<T: Real>(m: &TrainedModel<T>, path: &Path) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_model(m))
}

pub fn load_model<T: Real>(path: &Path) -> Result<TrainedModel<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?
        .read_to_end(&mut bytes)?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::train;
    use crate::synth::gaussian_blobs;

    fn small_cfg() -> TrainConfig {
        TrainConfig { rf_trees: 7, ada_stages: 8, gb_stages: 6, svm_epochs: 3, knn_k: 3, ..Default::default() }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let train_set = gaussian_blobs::<f64>(12, 4, 2.0, 8);
        let probe = gaussian_blobs::<f64>(12, 4, 2.0, 9);
        let s = crate::fusion::Standardizer::fit(&train_set).unwrap();
        for kind in ClassifierKind::ALL {
            let m = train(kind, &train_set, &small_cfg()).unwrap().with_standardizer(s.clone()).unwrap();
            let bytes = encode_model(&m);
            let back: TrainedModel<f64> = decode_model(&bytes).unwrap();
            assert_eq!(back, m, "{kind}");
            assert_eq!(encode_model(&back), bytes);
            for p in &probe {
                assert_eq!(back.predict(&p.features).unwrap(), m.predict(&p.features).unwrap());
            }
        }
    }

    #[test]
    fn f32_round_trip() {
        let train_set = gaussian_blobs::<f32>(12, 4, 2.0, 8);
        for kind in ClassifierKind::ALL {
            let m = train(kind, &train_set, &small_cfg()).unwrap();
            let bytes = encode_model(&m);
            assert_eq!(decode_model::<f32>(&bytes).unwrap(), m);
            assert!(matches!(decode_model::<f64>(&bytes), Err(Error::ModelFormat(_))));
        }
    }

    #[test]
    fn deep_last_tree_round_trips() {
        // Child indices near the end of the file can exceed the bytes left.
        let train_set = gaussian_blobs::<f64>(60, 3, 0.2, 4);
        let cfg = TrainConfig { rf_trees: 2, ..small_cfg() };
        let m = train(ClassifierKind::RandomForest, &train_set, &cfg).unwrap();
        let ModelState::RandomForest(f) = &m.state else { unreachable!() };
        assert!(f.trees.last().unwrap().nodes.len() > 100);
        assert_eq!(decode_model::<f64>(&encode_model(&m)).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let train_set = gaussian_blobs::<f64>(6, 3, 2.0, 1);
        let bytes = encode_model(&train(ClassifierKind::RandomForest, &train_set, &small_cfg()).unwrap());
        assert!(decode_model::<f64>(b"NOPE").is_err());
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_model::<f64>(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model::<f64>(&extra).is_err());
    }
}
