use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{Reader, Writer};
use crate::types::PageKey;

use super::kmeans::{kmeans, nearest};
use super::{dot, top_k, FlatIndex, SearchHit, VectorIndexError};

const MAGIC: [u8; 4] = *b"IVF1";
const VERSION: u32 = 1;
const MAX_NLIST: usize = 65_536;
const TRAIN_PER_LIST: usize = 256;

/// `ceil(sqrt(count))`, clamped to `[1, 65536]` and to `count`.
pub fn default_nlist(count: usize) -> usize {
    let mut n = (count as f64).sqrt().ceil() as usize;
    while n * n < count {
        n += 1;
    }
    n.clamp(1, MAX_NLIST).min(count.max(1))
}

pub fn default_nprobe(nlist: usize) -> usize {
    (nlist / 16).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfParams {
    /// Defaults to [`default_nlist`].
    pub nlist: Option<usize>,
    pub iters: usize,
    pub seed: u64,
}

impl Default for IvfParams {
    fn default() -> Self {
        Self {
            nlist: None,
            iters: 20,
            seed: 0x1f_0001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct InvertedList {
    ids: Vec<PageKey>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    model_id: String,
    count: usize,
    train_seed: u64,
    centroids: Vec<f32>,
    lists: Vec<InvertedList>,
}

impl IvfIndex {
    /// Trains centroids on a uniform sample of at most `256 * nlist` vectors and files every
    /// vector under its nearest centroid.
    pub fn build(source: &FlatIndex, params: IvfParams) -> Result<Self, VectorIndexError> {
        let dim = source.dim();
        let count = source.len();
        if count == 0 {
            return Ok(Self {
                dim,
                model_id: source.model_id().to_string(),
                count: 0,
                train_seed: params.seed,
                centroids: Vec::new(),
                lists: Vec::new(),
            });
        }
        let nlist = params.nlist.unwrap_or_else(|| default_nlist(count));
        if nlist == 0 || nlist > MAX_NLIST {
            return Err(VectorIndexError::InvalidParameter(format!("nlist {nlist} outside [1, {MAX_NLIST}]")));
        }
        if count < nlist {
            return Err(VectorIndexError::InsufficientData { count, nlist });
        }

        let cap = TRAIN_PER_LIST * nlist;
        let training: Vec<f32> = if count > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5a5a_5a5a);
            let mut picks = rand::seq::index::sample(&mut rng, count, cap).into_vec();
            picks.sort_unstable();
            picks.iter().flat_map(|&i| source.vector(i).iter().copied()).collect()
        } else {
            source.iter().flat_map(|(_, v)| v.iter().copied()).collect()
        };
        let centroids = kmeans(&training, dim, nlist, params.iters, params.seed)?;

        let assignment: Vec<usize> = (0..count)
            .into_par_iter()
            .map(|i| nearest(&centroids, dim, source.vector(i)).0)
            .collect();
        let mut lists = vec![InvertedList::default(); nlist];
        for (i, &c) in assignment.iter().enumerate() {
            lists[c].ids.push(source.ids()[i].clone());
            lists[c].data.extend_from_slice(source.vector(i));
        }

        Ok(Self {
            dim,
            model_id: source.model_id().to_string(),
            count,
            train_seed: params.seed,
            centroids,
            lists,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn list_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(|l| l.ids.len()).collect()
    }

    pub fn page_keys(&self) -> Vec<PageKey> {
        self.lists.iter().flat_map(|l| l.ids.iter().cloned()).collect()
    }

    /// The `nprobe` centroids with the largest inner product with `query`.
    fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f32)> = self
            .centroids
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, c)| (i, dot(query, c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(nprobe);
        scored.into_iter().map(|(i, _)| i).collect()
    }

    pub fn search(&self, query: &[f32], k: usize, nprobe: usize) -> Result<Vec<SearchHit>, VectorIndexError> {
        if query.len() != self.dim {
            return Err(VectorIndexError::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(VectorIndexError::InvalidParameter("k must be at least 1".into()));
        }
        if nprobe == 0 || (self.nlist() > 0 && nprobe > self.nlist()) {
            return Err(VectorIndexError::InvalidParameter(format!(
                "nprobe {nprobe} outside [1, {}]",
                self.nlist()
            )));
        }
        let probes = self.probe_order(query, nprobe);
        let candidates = probes.iter().flat_map(|&c| {
            let list = &self.lists[c];
            list.ids
                .iter()
                .zip(list.data.chunks_exact(self.dim))
                .map(|(key, v)| (key, dot(query, v)))
        });
        Ok(top_k(candidates, k))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&MAGIC);
        w.u32(VERSION);
        w.u32(self.dim as u32);
        w.u64(self.count as u64);
        w.str(&self.model_id);
        w.u32(self.lists.len() as u32);
        w.u64(self.train_seed);
        w.f32s(&self.centroids);
        for list in &self.lists {
            w.u64(list.ids.len() as u64);
            for key in &list.ids {
                w.page_key(key);
            }
            w.f32s(&list.data);
        }
        w.finish_with_crc()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, VectorIndexError> {
        let mut r = Reader::open_checked(bytes, MAGIC, VERSION)?;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let model_id = r.str()?;
        let nlist = r.u32()? as usize;
        let train_seed = r.u64()?;
        let centroids = r.f32s(nlist * dim)?;
        let mut lists = Vec::with_capacity(nlist);
        let mut total = 0;
        for _ in 0..nlist {
            let len = r.u64()? as usize;
            let mut ids = Vec::with_capacity(len.min(1 << 20));
            for _ in 0..len {
                ids.push(r.page_key()?);
            }
            let data = r.f32s(len * dim)?;
            total += len;
            lists.push(InvertedList { ids, data });
        }
        r.expect_end()?;
        if total != count {
            return Err(crate::codec::CodecError::Malformed(format!(
                "list sizes sum to {total}, header says {count}"
            ))
            .into());
        }
        Ok(Self {
            dim,
            model_id,
            count,
            train_seed,
            centroids,
            lists,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_flat(n: usize, dim: usize, seed: u64) -> FlatIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = FlatIndex::new("m", dim);
        for i in 0..n {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            idx.add(PageKey::new(format!("d{:04}", i / 3), (i % 3) as u32 + 1), &v).unwrap();
        }
        idx
    }

    #[test]
    fn defaults() {
        assert_eq!(default_nlist(0), 1);
        assert_eq!(default_nlist(1), 1);
        assert_eq!(default_nlist(10_000), 100);
        assert_eq!(default_nlist(10_001), 101);
        assert_eq!(default_nprobe(64), 4);
        assert_eq!(default_nprobe(8), 1);
    }

    #[test]
    fn lists_partition_ids() {
        let flat = random_flat(500, 8, 1);
        let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(12), ..Default::default() }).unwrap();
        assert_eq!(ivf.list_sizes().iter().sum::<usize>(), 500);
        let mut keys = ivf.page_keys();
        keys.sort();
        let mut want = flat.ids().to_vec();
        want.sort();
        assert_eq!(keys, want);
    }

    #[test]
    fn full_probe_equals_flat() {
        let flat = random_flat(400, 12, 2);
        let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(10), ..Default::default() }).unwrap();
        let q = flat.vector(17).to_vec();
        assert_eq!(ivf.search(&q, 25, 10).unwrap(), flat.search(&q, 25).unwrap());
    }

    #[test]
    fn nprobe_bounds() {
        let flat = random_flat(50, 4, 3);
        let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(5), ..Default::default() }).unwrap();
        let q = flat.vector(0).to_vec();
        assert!(matches!(ivf.search(&q, 1, 0), Err(VectorIndexError::InvalidParameter(_))));
        assert!(matches!(ivf.search(&q, 1, 6), Err(VectorIndexError::InvalidParameter(_))));
    }

    #[test]
    fn empty_index_round_trips() {
        let ivf = IvfIndex::build(&FlatIndex::new("m", 4), IvfParams::default()).unwrap();
        let back = IvfIndex::decode(&ivf.encode()).unwrap();
        assert_eq!(back, ivf);
        assert!(back.search(&[1.0, 0.0, 0.0, 0.0], 3, 1).unwrap().is_empty());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn recall_never_drops_as_nprobe_grows(seed in 0u64..1_000, qi in 0usize..300) {
            let flat = random_flat(300, 6, seed);
            let ivf = IvfIndex::build(&flat, IvfParams { nlist: Some(8), seed, ..Default::default() }).unwrap();
            let q = flat.vector(qi).to_vec();
            let truth: Vec<PageKey> = flat.search(&q, 10).unwrap().into_iter().map(|h| h.page_key).collect();
            let mut last = 0;
            for nprobe in 1..=8 {
                let hits = ivf.search(&q, 10, nprobe).unwrap();
                let found = hits.iter().filter(|h| truth.contains(&h.page_key)).count();
                proptest::prop_assert!(found >= last, "nprobe {nprobe}: {found} < {last}");
                last = found;
            }
            proptest::prop_assert_eq!(last, 10);
        }
    }
}
