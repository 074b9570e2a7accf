//! Random TSP journeys: generation, persistence and validation.
//!
//! Coordinates are integers drawn uniformly from `[0, 100] x [0, 100]`
//! (stored as `f64`) using ChaCha8 seeded from a 64-bit seed. Duplicate
//! coordinate pairs are rejected and redrawn, so an instance of size `n`
//! always holds `n` distinct points with IDs `1..=n` in draw order.
//!
//! Dataset instance seeds are derived with SplitMix64:
//!
//! ```text
//! child_seed(master, size, index) =
//!     splitmix64(splitmix64(splitmix64(master) ^ size) ^ index)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Version written into, and required from, every dataset file.
pub const DATASET_SCHEMA: u32 = 1;

/// Inclusive upper bound of each generated coordinate.
pub const COORD_MAX: i64 = 100;

/// Dataset design used when no sizes are given.
pub const DEFAULT_SIZES: [usize; 4] = [5, 10, 15, 20];
pub const DEFAULT_PER_SIZE_COUNT: usize = 30;

const MAX_DISTINCT_POINTS: usize = ((COORD_MAX + 1) * (COORD_MAX + 1)) as usize;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("instance needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("cannot place {0} distinct integer points on the coordinate grid")]
    TooManyPoints(usize),
    #[error("dataset needs at least one size")]
    EmptySizes,
    #[error("per-size count must be at least 1")]
    ZeroCount,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset file: {0}")]
    Schema(String),
    #[error("dataset schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid instance {instance_id}: {reason}")]
    Validation { instance_id: String, reason: String },
}

/// A node of a journey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub n: usize,
    pub seed: u64,
    pub points: Vec<Point>,
}

impl Instance {
    /// Builds an instance from raw coordinates, numbering them `1..=n`.
    pub fn from_coords(
        instance_id: impl Into<String>,
        coords: &[(f64, f64)],
    ) -> Result<Self, InstanceError> {
        let instance = Instance {
            instance_id: instance_id.into(),
            n: coords.len(),
            seed: 0,
            points: coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Point::new(i as u32 + 1, x, y))
                .collect(),
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Point with the given 1-based ID.
    pub fn point(&self, id: u32) -> Option<&Point> {
        let idx = (id as usize).checked_sub(1)?;
        self.points.get(idx)
    }

    /// Symmetric Euclidean distance matrix indexed by `id - 1`.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|a| self.points.iter().map(|b| a.distance(b)).collect())
            .collect()
    }

    /// Checks the structural invariants: `n >= 3`, IDs contiguous from 1,
    /// finite and pairwise distinct coordinates.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let fail = |reason: String| InstanceError::Validation {
            instance_id: self.instance_id.clone(),
            reason,
        };
        if self.n < 3 {
            return Err(fail(format!("n = {} is below 3", self.n)));
        }
        if self.points.len() != self.n {
            return Err(fail(format!(
                "declares n = {} but holds {} points",
                self.n,
                self.points.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.n);
        for (idx, p) in self.points.iter().enumerate() {
            if p.id as usize != idx + 1 {
                return Err(fail(format!(
                    "point at position {} has id {} (ids must run 1..={})",
                    idx + 1,
                    p.id,
                    self.n
                )));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(fail(format!("point {} has non-finite coordinates", p.id)));
            }
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(fail(format!(
                    "duplicate coordinates ({}, {}) at point {}",
                    p.x, p.y, p.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub per_size_count: usize,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Instances of a given size, in dataset order.
    pub fn of_size(&self, n: usize) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.n == n)
    }

    pub fn get(&self, instance_id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_id == instance_id)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.sizes.is_empty() {
            return Err(InstanceError::EmptySizes);
        }
        if self.per_size_count == 0 {
            return Err(InstanceError::ZeroCount);
        }
        let mut ids = HashSet::new();
        for instance in &self.instances {
            instance.validate()?;
            if !ids.insert(instance.instance_id.as_str()) {
                return Err(InstanceError::Validation {
                    instance_id: instance.instance_id.clone(),
                    reason: "duplicate instance id".into(),
                });
            }
        }
        for &size in &self.sizes {
            let count = self.of_size(size).count();
            if count != self.per_size_count {
                return Err(InstanceError::Schema(format!(
                    "size {size} has {count} instances, expected {}",
                    self.per_size_count
                )));
            }
        }
        if self.instances.len() != self.sizes.len() * self.per_size_count {
            return Err(InstanceError::Schema(format!(
                "{} instances do not match {} sizes x {}",
                self.instances.len(),
                self.sizes.len(),
                self.per_size_count
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser; the mixing function behind every derived seed.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of instance `index` of size `size` within a dataset.
pub fn child_seed(master: u64, size: usize, index: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ size as u64) ^ index as u64)
}

/// Default identifier of a standalone instance.
pub fn default_instance_id(n: usize, seed: u64) -> String {
    format!("n{n:02}-s{seed:016x}")
}

pub fn generate_instance(n: usize, seed: u64) -> Result<Instance, InstanceError> {
    if n < 3 {
        return Err(InstanceError::TooFewPoints(n));
    }
    if n > MAX_DISTINCT_POINTS {
        return Err(InstanceError::TooManyPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let x = rng.random_range(0..=COORD_MAX);
        let y = rng.random_range(0..=COORD_MAX);
        if seen.insert((x, y)) {
            points.push(Point::new(points.len() as u32 + 1, x as f64, y as f64));
        }
    }
    Ok(Instance {
        instance_id: default_instance_id(n, seed),
        n,
        seed,
        points,
    })
}

pub fn generate_dataset(
    sizes: &[usize],
    per_size_count: usize,
    seed: u64,
) -> Result<Dataset, InstanceError> {
    if sizes.is_empty() {
        return Err(InstanceError::EmptySizes);
    }
    if per_size_count == 0 {
        return Err(InstanceError::ZeroCount);
    }
    let mut instances = Vec::with_capacity(sizes.len() * per_size_count);
    for &size in sizes {
        for index in 0..per_size_count {
            let mut instance = generate_instance(size, child_seed(seed, size, index))?;
            instance.instance_id = format!("n{size:02}-i{index:03}");
            instances.push(instance);
        }
    }
    let dataset = Dataset {
        seed,
        sizes: sizes.to_vec(),
        per_size_count,
        instances,
    };
    // Repeated sizes would break the per-size count invariant.
    dataset.validate()?;
    Ok(dataset)
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema: u32,
    seed: u64,
    sizes: Vec<usize>,
    per_size_count: usize,
    instances: Vec<Instance>,
}

/// Serialises a dataset to its pretty-printed JSON file form.
pub fn dataset_to_json(dataset: &Dataset) -> String {
    let file = DatasetFile {
        schema: DATASET_SCHEMA,
        seed: dataset.seed,
        sizes: dataset.sizes.clone(),
        per_size_count: dataset.per_size_count,
        instances: dataset.instances.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("dataset serialises");
    text.push('\n');
    text
}

pub fn dataset_from_json(text: &str) -> Result<Dataset, InstanceError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| InstanceError::Schema(e.to_string()))?;
    let schema = value
        .get("schema")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| InstanceError::Schema("missing schema version".into()))?;
    if schema != DATASET_SCHEMA as u64 {
        return Err(InstanceError::SchemaVersion {
            found: schema as u32,
            expected: DATASET_SCHEMA,
        });
    }
    let file: DatasetFile =
        serde_json::from_value(value).map_err(|e| InstanceError::Schema(e.to_string()))?;
    let dataset = Dataset {
        seed: file.seed,
        sizes: file.sizes,
        per_size_count: file.per_size_count,
        instances: file.instances,
    };
    dataset.validate()?;
    Ok(dataset)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), InstanceError> {
    fs::write(path, dataset_to_json(dataset)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, InstanceError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    dataset_from_json(&text)
}
