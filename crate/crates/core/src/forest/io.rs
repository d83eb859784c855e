//! Forest persistence.
//!
//! Binary layout (all integers `u64` little-endian unless noted, floats are
//! IEEE-754 `f64` little-endian, strings are a `u64` byte length followed by
//! UTF-8):
//!
//! ```text
//! magic "DRFF" | version u32
//! config: num_trees, num_groups, subsample_exponent f64, mtry (0 = auto),
//!         min_node_size, alpha f64, num_features, bandwidth tag u8 [+ f64],
//!         split mode u8, seed
//! n, p, d, bandwidth f64
//! p covariate names, d response names
//! n*d response values, row-major
//! groups: count, then per group: half-sample (count + u32s), trees: count,
//!         then per tree: nodes (count + node records), leaf rows, build rows
//! node record: tag u8 (0 split, 1 leaf), then
//!         split: feature u32, threshold f64, left u32, right u32, build_count u32
//!         leaf:  start u32, len u32, build_count u32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::{BandwidthPolicy, ForestConfig, Group, GroupedForest, Node, SplitMode, Tree};
use crate::error::{check_dim, Error, Result};
use crate::kernel::Bandwidth;

const MAGIC: &[u8; 4] = b"DRFF";
pub const FORMAT_VERSION: u32 = 1;

/// A fitted forest together with the training responses its weights refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub forest: GroupedForest,
    pub responses: Array2<f64>,
    pub covariate_names: Vec<String>,
    pub response_names: Vec<String>,
}

impl ForestModel {
    pub fn new(
        forest: GroupedForest,
        responses: Array2<f64>,
        covariate_names: Vec<String>,
        response_names: Vec<String>,
    ) -> Result<Self> {
        check_dim(forest.n, responses.nrows())?;
        check_dim(forest.d, responses.ncols())?;
        check_dim(forest.p, covariate_names.len())?;
        check_dim(forest.d, response_names.len())?;
        Ok(ForestModel {
            forest,
            responses,
            covariate_names,
            response_names,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let f = &self.forest;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_config(w, &f.config)?;
        for v in [f.n, f.p, f.d] {
            put_u64(w, v as u64)?;
        }
        put_f64(w, f.bandwidth.sigma())?;
        for name in self.covariate_names.iter().chain(&self.response_names) {
            put_str(w, name)?;
        }
        for v in self.responses.iter() {
            put_f64(w, *v)?;
        }
        put_u64(w, f.groups.len() as u64)?;
        for g in &f.groups {
            put_u32s(w, &g.half_sample)?;
            put_u64(w, g.trees.len() as u64)?;
            for t in &g.trees {
                write_tree(w, t)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut rd = Reader { inner: r };
        let mut magic = [0u8; 4];
        rd.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a forest file (bad magic)".into()));
        }
        let mut ver = [0u8; 4];
        rd.fill(&mut ver)?;
        let version = u32::from_le_bytes(ver);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let config = read_config(&mut rd)?;
        let n = rd.usize()?;
        let p = rd.usize()?;
        let d = rd.usize()?;
        let bandwidth = Bandwidth::new(rd.f64()?).map_err(|e| Error::Format(e.to_string()))?;
        let covariate_names = (0..p).map(|_| rd.string()).collect::<Result<Vec<_>>>()?;
        let response_names = (0..d).map(|_| rd.string()).collect::<Result<Vec<_>>>()?;
        let total = n.checked_mul(d).ok_or_else(|| Error::Format("response size overflow".into()))?;
        let mut values = Vec::with_capacity(total.min(1 << 24));
        for _ in 0..total {
            values.push(rd.f64()?);
        }
        let responses =
            Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
        let num_groups = rd.usize()?;
        let mut groups = Vec::with_capacity(num_groups.min(1 << 16));
        for _ in 0..num_groups {
            let half_sample = rd.u32s()?;
            let num_trees = rd.usize()?;
            let mut trees = Vec::with_capacity(num_trees.min(1 << 16));
            for _ in 0..num_trees {
                trees.push(read_tree(&mut rd)?);
            }
            groups.push(Group { half_sample, trees });
        }
        let mut trailing = [0u8; 1];
        if rd.inner.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after forest".into()));
        }
        let forest = GroupedForest {
            groups,
            bandwidth,
            n,
            p,
            d,
            config,
        };
        ForestModel::new(forest, responses, covariate_names, response_names)
            .map_err(|e| Error::Format(e.to_string()))
    }

    /// Human-readable dump of the whole model.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            format_version: u32,
            covariate_names: &'a [String],
            response_names: &'a [String],
            responses: Vec<Vec<f64>>,
            forest: &'a GroupedForest,
        }
        let dump = Dump {
            format_version: FORMAT_VERSION,
            covariate_names: &self.covariate_names,
            response_names: &self.response_names,
            responses: self.responses.rows().into_iter().map(|r| r.to_vec()).collect(),
            forest: &self.forest,
        };
        serde_json::to_string_pretty(&dump).map_err(|e| Error::Format(e.to_string()))
    }
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_u64(w, s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn put_u32s<W: Write>(w: &mut W, v: &[u32]) -> std::io::Result<()> {
    put_u64(w, v.len() as u64)?;
    v.iter().try_for_each(|x| put_u32(w, *x))
}

fn write_config<W: Write>(w: &mut W, c: &ForestConfig) -> std::io::Result<()> {
    put_u64(w, c.num_trees as u64)?;
    put_u64(w, c.num_groups as u64)?;
    put_f64(w, c.subsample_exponent)?;
    put_u64(w, c.mtry.unwrap_or(0) as u64)?;
    put_u64(w, c.min_node_size as u64)?;
    put_f64(w, c.alpha)?;
    put_u64(w, c.num_features as u64)?;
    match c.bandwidth {
        BandwidthPolicy::Median => w.write_all(&[0])?,
        BandwidthPolicy::Fixed(s) => {
            w.write_all(&[1])?;
            put_f64(w, s)?;
        }
    }
    w.write_all(&[match c.split_mode {
        SplitMode::Features => 0,
        SplitMode::Exact => 1,
    }])?;
    put_u64(w, c.seed)
}

fn write_tree<W: Write>(w: &mut W, t: &Tree) -> std::io::Result<()> {
    put_u64(w, t.nodes.len() as u64)?;
    for node in &t.nodes {
        match *node {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                build_count,
            } => {
                w.write_all(&[0])?;
                put_u32(w, feature)?;
                put_f64(w, threshold)?;
                put_u32(w, left)?;
                put_u32(w, right)?;
                put_u32(w, build_count)?;
            }
            Node::Leaf {
                start,
                len,
                build_count,
            } => {
                w.write_all(&[1])?;
                put_u32(w, start)?;
                put_u32(w, len)?;
                put_u32(w, build_count)?;
            }
        }
    }
    put_u32s(w, &t.leaf_rows)?;
    put_u32s(w, &t.build_rows)
}

struct Reader<'a, R: Read> {
    inner: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner
            .read_exact(buf)
            .map_err(|e| Error::Format(format!("truncated forest file: {e}")))
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("length overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.usize()?;
        if len > 1 << 20 {
            return Err(Error::Format("implausible name length".into()));
        }
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::Format("name is not UTF-8".into()))
    }

    fn u32s(&mut self) -> Result<Vec<u32>> {
        let len = self.usize()?;
        let mut out = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            out.push(self.u32()?);
        }
        Ok(out)
    }
}

fn read_config<R: Read>(rd: &mut Reader<'_, R>) -> Result<ForestConfig> {
    let num_trees = rd.usize()?;
    let num_groups = rd.usize()?;
    let subsample_exponent = rd.f64()?;
    let mtry = match rd.usize()? {
        0 => None,
        m => Some(m),
    };
    let min_node_size = rd.usize()?;
    let alpha = rd.f64()?;
    let num_features = rd.usize()?;
    let bandwidth = match rd.u8()? {
        0 => BandwidthPolicy::Median,
        1 => BandwidthPolicy::Fixed(rd.f64()?),
        t => return Err(Error::Format(format!("unknown bandwidth tag {t}"))),
    };
    let split_mode = match rd.u8()? {
        0 => SplitMode::Features,
        1 => SplitMode::Exact,
        t => return Err(Error::Format(format!("unknown split mode tag {t}"))),
    };
    let seed = rd.u64()?;
    Ok(ForestConfig {
        num_trees,
        num_groups,
        subsample_exponent,
        mtry,
        min_node_size,
        alpha,
        num_features,
        bandwidth,
        split_mode,
        seed,
    })
}

fn read_tree<R: Read>(rd: &mut Reader<'_, R>) -> Result<Tree> {
    let count = rd.usize()?;
    let mut nodes = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let node = match rd.u8()? {
            0 => Node::Split {
                feature: rd.u32()?,
                threshold: rd.f64()?,
                left: rd.u32()?,
                right: rd.u32()?,
                build_count: rd.u32()?,
            },
            1 => Node::Leaf {
                start: rd.u32()?,
                len: rd.u32()?,
                build_count: rd.u32()?,
            },
            t => return Err(Error::Format(format!("unknown node tag {t}"))),
        };
        nodes.push(node);
    }
    let leaf_rows = rd.u32s()?;
    let build_rows = rd.u32s()?;
    Tree::from_parts(nodes, leaf_rows, build_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> ForestModel {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((120, 2), |_| rng.random::<f64>());
        let y = Array2::from_shape_fn((120, 2), |(i, j)| x[[i, j]] * 2.0 + rng.random::<f64>());
        let cfg = ForestConfig {
            num_trees: 30,
            num_groups: 3,
            mtry: Some(2),
            ..Default::default()
        };
        let forest = GroupedForest::fit(x.view(), y.view(), &cfg).unwrap();
        ForestModel::new(forest, y, vec!["a".into(), "b".into()], vec!["u".into(), "v".into()]).unwrap()
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = ForestModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let q = [0.3, 0.8];
        assert_eq!(back.forest.weights(&q).unwrap(), m.forest.weights(&q).unwrap());
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = model();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert!(ForestModel::read_from(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ForestModel::read_from(&mut bad.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(ForestModel::read_from(&mut long.as_slice()).is_err());
    }

    #[test]
    fn json_dump_mentions_structure() {
        let json = model().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["forest"]["groups"].as_array().unwrap().len(), 3);
        assert_eq!(v["response_names"][1], "v");
    }
}
