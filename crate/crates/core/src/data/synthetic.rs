use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DatasetConfig, StreamPair};
use crate::error::{Error, Result};
use crate::replay::{Task, TaskStream};
use crate::rng::{derive, Purpose};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = Array1::from_shape_simple_fn(dim, || StandardNormal.sample(rng));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Class centres on a sphere of radius `separation`, each at least
/// `separation` away from every earlier one.
fn blob_centres<R: Rng + ?Sized>(cfg: &DatasetConfig, rng: &mut R) -> Result<Vec<Array1<f64>>> {
    let mut centres: Vec<Array1<f64>> = Vec::with_capacity(cfg.num_classes);
    for class in 0..cfg.num_classes {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let c = unit_direction(rng, cfg.dim) * cfg.separation;
            let ok = centres.iter().all(|o| {
                let d = &c - o;
                d.dot(&d).sqrt() >= cfg.separation
            });
            if ok {
                centres.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place class {class} at distance >= {} from the others in {} dimensions",
                cfg.separation, cfg.dim
            )));
        }
    }
    Ok(centres)
}

fn split_into_streams(
    cfg: &DatasetConfig,
    mut sample: impl FnMut(usize, &mut dyn FnMut() -> f64) -> Vec<f64>,
    seed: u64,
) -> Result<StreamPair> {
    let mut train_rng = derive(seed, Purpose::Data, 1, 0);
    let mut test_rng = derive(seed, Purpose::Data, 2, 0);
    let mut build = |per_class: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<TaskStream> {
        let mut tasks = Vec::with_capacity(cfg.num_tasks);
        for classes in cfg.default_partition() {
            let mut rows = Vec::with_capacity(classes.len() * per_class * cfg.dim);
            let mut labels = Vec::with_capacity(classes.len() * per_class);
            for &class in &classes {
                for _ in 0..per_class {
                    let mut normal = || -> f64 { StandardNormal.sample(&mut *rng) };
                    rows.extend(sample(class, &mut normal));
                    labels.push(class);
                }
            }
            let inputs = Array2::from_shape_vec((labels.len(), cfg.dim), rows)
                .expect("row width matches dim");
            tasks.push(Task::new(inputs, labels)?);
        }
        TaskStream::new(tasks)
    };
    let train = build(cfg.train_per_class, &mut train_rng)?;
    let test = build(cfg.test_per_class, &mut test_rng)?;
    Ok(StreamPair { train, test })
}

/// Isotropic Gaussian blobs around well-separated centres.
pub fn gaussian_blobs(cfg: &DatasetConfig, seed: u64) -> Result<StreamPair> {
    let mut centre_rng = derive(seed, Purpose::Data, 0, 0);
    let centres = blob_centres(cfg, &mut centre_rng)?;
    let noise = cfg.noise;
    split_into_streams(
        cfg,
        |class, normal| centres[class].iter().map(|&m| m + noise * normal()).collect(),
        seed,
    )
}

/// Class `c` lies on a ring of radius `(c + 1) · separation` in the first two
/// coordinates; noise is added to every coordinate.
pub fn concentric_rings(cfg: &DatasetConfig, seed: u64) -> Result<StreamPair> {
    let noise = cfg.noise;
    let dim = cfg.dim;
    let sep = cfg.separation;
    split_into_streams(
        cfg,
        |class, normal| {
            // uniform angle from two normals: atan2 of an isotropic pair
            let angle = normal().atan2(normal());
            let radius = (class + 1) as f64 * sep;
            let mut row = vec![0.0; dim];
            row[0] = radius * angle.cos();
            row[1] = radius * angle.sin();
            for v in row.iter_mut() {
                *v += noise * normal();
            }
            row
        },
        seed,
    )
}
