//! Synthetic multi-domain, multi-camera identity datasets in feature space.
//!
//! Identities are unit latent vectors. A domain maps latents into input space
//! with its own full-rank linear map and offset; each camera of the domain
//! applies a further near-identity linear map and offset; Gaussian noise is
//! added last. Two domains with different transform seeds therefore differ by
//! an unknown affine distortion, which is the domain gap the adaptation has
//! to bridge.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, ParseError, Result};
use crate::numcore::{l2_normalize_rows, Matrix};
use crate::numfmt::sig9;
use crate::rng::{derive_seed, rng_for, streams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "query" => Some(Split::Query),
            "gallery" => Some(Split::Gallery),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub vector: Vec<f64>,
    pub identity: usize,
    pub camera: usize,
    pub domain: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub name: String,
    pub identity_count: usize,
    pub cameras: usize,
    pub images_per_identity_per_camera: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub noise_sigma: f64,
    /// Scale of the random perturbation of each camera's linear map.
    pub camera_strength: f64,
    /// Standard deviation of domain and camera offsets.
    pub offset_scale: f64,
    /// Eval domains hold out query and gallery images.
    pub eval: bool,
    /// Seed for transforms and noise.
    pub seed: u64,
    /// Seed for identity latents; domains sharing it share identities.
    pub identity_seed: u64,
}

impl DomainSpec {
    /// Desk-scale defaults: 100 identities, 4 cameras, 6 images per identity
    /// per camera, latent 16, input 32, noise 0.08.
    pub fn desk(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            identity_count: 100,
            cameras: 4,
            images_per_identity_per_camera: 6,
            latent_dim: 16,
            input_dim: 32,
            noise_sigma: 0.08,
            camera_strength: 0.3,
            offset_scale: 0.3,
            eval: false,
            seed,
            identity_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.name.is_empty() || self.name.contains([',', '\n', '\r']) {
            problems.push(format!("domain name {:?} must be non-empty without commas", self.name));
        }
        for (field, v) in [
            ("identity_count", self.identity_count),
            ("cameras", self.cameras),
            ("images_per_identity_per_camera", self.images_per_identity_per_camera),
            ("latent_dim", self.latent_dim),
            ("input_dim", self.input_dim),
        ] {
            if v == 0 {
                problems.push(format!("{field} must be at least 1"));
            }
        }
        if self.latent_dim > self.input_dim {
            problems.push("latent_dim must not exceed input_dim (domain map must be full rank)".into());
        }
        if self.eval && self.images_per_identity_per_camera < 2 {
            problems.push("eval domains need at least 2 images per identity per camera".into());
        }
        for (field, v) in [
            ("noise_sigma", self.noise_sigma),
            ("camera_strength", self.camera_strength),
            ("offset_scale", self.offset_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                problems.push(format!("{field} must be finite and non-negative"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(problems.join("; ")))
        }
    }

    pub fn transforms(&self) -> Result<DomainTransforms> {
        self.validate()?;
        let mut rng = rng_for(self.seed, streams::TRANSFORMS);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let gauss = |rng: &mut Rng, scale: f64| scale * normal.sample(rng);
        let (d, l) = (self.input_dim, self.latent_dim);
        // rows: latent → input (applied as latent_row × map)
        let map_scale = 1.0;
        let domain_map = Matrix::from_fn(l, d, |_, _| gauss(&mut rng, map_scale));
        let domain_offset = Matrix::from_fn(1, d, |_, _| gauss(&mut rng, self.offset_scale));
        let camera_scale = self.camera_strength / (d as f64).sqrt();
        let cameras = (0..self.cameras)
            .map(|_| {
                let map = Matrix::from_fn(d, d, |r, c| {
                    let eye = if r == c { 1.0 } else { 0.0 };
                    eye + gauss(&mut rng, camera_scale)
                });
                let offset = Matrix::from_fn(1, d, |_, _| gauss(&mut rng, self.offset_scale));
                (map, offset)
            })
            .collect();
        Ok(DomainTransforms {
            domain_map,
            domain_offset,
            cameras,
        })
    }
}

/// The default source→target task for a run seed: two desk-scale domains
/// with independent identities and transforms; only the target holds out
/// query and gallery images.
pub fn default_task(seed: u64) -> [DomainSpec; 2] {
    [
        DomainSpec::desk("source", derive_seed(seed, 100)),
        DomainSpec {
            eval: true,
            ..DomainSpec::desk("target", derive_seed(seed, 101))
        },
    ]
}

/// Concrete affine maps of a domain.
#[derive(Debug, Clone)]
pub struct DomainTransforms {
    /// `latent_dim × input_dim`.
    pub domain_map: Matrix,
    pub domain_offset: Matrix,
    /// Per camera: `input_dim × input_dim` map and `1 × input_dim` offset.
    pub cameras: Vec<(Matrix, Matrix)>,
}

/// A labelled sample collection. Identity labels are stored but the
/// adaptation trainer never reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub input_dim: usize,
    pub samples: Vec<Sample>,
}

/// Features plus labels of one split, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub features: Matrix,
    pub identities: Vec<usize>,
    pub cameras: Vec<usize>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> SplitView {
        let picked: Vec<&Sample> = self.samples.iter().filter(|s| s.split == split).collect();
        let mut data = Vec::with_capacity(picked.len() * self.input_dim);
        for s in &picked {
            data.extend_from_slice(&s.vector);
        }
        SplitView {
            features: Matrix::new(picked.len(), self.input_dim, data).expect("consistent widths"),
            identities: picked.iter().map(|s| s.identity).collect(),
            cameras: picked.iter().map(|s| s.camera).collect(),
        }
    }

    /// Every sample regardless of split.
    pub fn all(&self) -> SplitView {
        let mut data = Vec::with_capacity(self.samples.len() * self.input_dim);
        for s in &self.samples {
            data.extend_from_slice(&s.vector);
        }
        SplitView {
            features: Matrix::new(self.samples.len(), self.input_dim, data).expect("consistent widths"),
            identities: self.samples.iter().map(|s| s.identity).collect(),
            cameras: self.samples.iter().map(|s| s.camera).collect(),
        }
    }

    pub fn has_eval_splits(&self) -> bool {
        self.samples.iter().any(|s| s.split == Split::Query) && self.samples.iter().any(|s| s.split == Split::Gallery)
    }

    pub fn concat(parts: &[SyntheticDataset]) -> Result<SyntheticDataset> {
        let input_dim = parts.first().map_or(0, |p| p.input_dim);
        if parts.iter().any(|p| p.input_dim != input_dim) {
            return Err(Error::Validation("datasets have different input widths".into()));
        }
        Ok(SyntheticDataset {
            input_dim,
            samples: parts.iter().flat_map(|p| p.samples.iter().cloned()).collect(),
        })
    }
}

pub fn generate_domain(spec: &DomainSpec) -> Result<SyntheticDataset> {
    let t = spec.transforms()?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut id_rng = rng_for(spec.identity_seed, streams::IDENTITIES);
    let latents = l2_normalize_rows(&Matrix::from_fn(spec.identity_count, spec.latent_dim, |_, _| {
        normal.sample(&mut id_rng)
    }));
    let clean = latents.matmul(&t.domain_map)?.add_row_broadcast(&t.domain_offset)?;
    let mut noise_rng = rng_for(spec.seed, streams::NOISE);
    let mut samples = Vec::with_capacity(spec.identity_count * spec.cameras * spec.images_per_identity_per_camera);
    for id in 0..spec.identity_count {
        let base = clean.select_rows(&[id])?;
        for (cam, (map, offset)) in t.cameras.iter().enumerate() {
            let viewed = base.matmul(map)?.add_row_broadcast(offset)?;
            for img in 0..spec.images_per_identity_per_camera {
                let vector: Vec<f64> = viewed
                    .row(0)
                    .iter()
                    .map(|&v| v + spec.noise_sigma * normal.sample(&mut noise_rng))
                    .collect();
                let split = match (spec.eval, img) {
                    (true, 0) => Split::Gallery,
                    (true, 1) => Split::Query,
                    _ => Split::Train,
                };
                samples.push(Sample {
                    vector,
                    identity: id,
                    camera: cam,
                    domain: spec.name.clone(),
                    split,
                });
            }
        }
    }
    Ok(SyntheticDataset {
        input_dim: spec.input_dim,
        samples,
    })
}

pub fn dataset_to_csv(ds: &SyntheticDataset) -> String {
    let mut out = String::from("id,camera,domain,split");
    for i in 0..ds.input_dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for s in &ds.samples {
        let _ = write!(out, "{},{},{},{}", s.identity, s.camera, s.domain, s.split.as_str());
        for &v in &s.vector {
            out.push(',');
            out.push_str(&sig9(v));
        }
        out.push('\n');
    }
    out
}

pub fn dataset_from_csv(text: &str) -> Result<SyntheticDataset, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hidx, header) = lines.next().ok_or(ParseError::Empty)?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    let fixed = ["id", "camera", "domain", "split"];
    if cols.len() < fixed.len() || cols[..4] != fixed {
        return Err(ParseError::Header {
            line: hidx + 1,
            message: format!("expected columns to start with {}", fixed.join(",")),
        });
    }
    let input_dim = cols.len() - 4;
    for (i, c) in cols[4..].iter().enumerate() {
        if *c != format!("x{i}") {
            return Err(ParseError::Header {
                line: hidx + 1,
                message: format!("column {} should be x{i}, found {c:?}", i + 4),
            });
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if fields.len() != cols.len() {
            return Err(ParseError::RowWidth {
                line: line_no,
                expected: cols.len(),
                found: fields.len(),
            });
        }
        let int = |col: usize| -> Result<usize, ParseError> {
            fields[col].trim().parse().map_err(|_| ParseError::Value {
                line: line_no,
                column: cols[col].to_string(),
                value: fields[col].to_string(),
            })
        };
        let identity = int(0)?;
        let camera = int(1)?;
        let split = Split::parse(fields[3].trim()).ok_or_else(|| ParseError::SplitTag {
            line: line_no,
            tag: fields[3].to_string(),
        })?;
        let vector = (4..fields.len())
            .map(|c| {
                fields[c]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ParseError::Value {
                        line: line_no,
                        column: cols[c].to_string(),
                        value: fields[c].to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        samples.push(Sample {
            vector,
            identity,
            camera,
            domain: fields[2].to_string(),
            split,
        });
    }
    Ok(SyntheticDataset { input_dim, samples })
}

pub fn write_dataset(ds: &SyntheticDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_csv(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(dataset_from_csv(&text)?)
}
