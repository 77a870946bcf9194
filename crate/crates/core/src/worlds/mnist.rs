//! MNIST IDX ingestion and the colored-digit domain construction.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::objective::DomainDataset;
use crate::rng::Rng;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
/// Colored images are laid out channel-major: R plane, G plane, B plane.
pub const COLORED_DIM: usize = 3 * PIXELS;

#[derive(Debug, Clone, PartialEq)]
pub struct MnistData {
    /// `n × 784` grayscale bytes, row-major per image.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl MnistData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    pub fn subset(&self, idx: &[usize]) -> MnistData {
        MnistData {
            images: idx
                .iter()
                .flat_map(|&i| self.image(i).iter().copied())
                .collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_length(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file held in memory; `path` is used only in errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(Error::Data(format!(
            "{}: images are {rows}×{cols}, expected 28×28",
            path.display()
        )));
    }
    check_length(bytes, 16 + n * PIXELS, path)?;
    Ok(bytes[16..16 + n * PIXELS].to_vec())
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    check_length(bytes, 8 + n, path)?;
    let labels = bytes[8..8 + n].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!(
            "{}: label {bad} is not a digit",
            path.display()
        )));
    }
    Ok(labels)
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<MnistData> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    let images = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    let n_images = images.len() / PIXELS;
    if n_images != labels.len() {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: labels.len(),
        });
    }
    Ok(MnistData { images, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    White,
}

impl Color {
    pub fn from_name(name: &str) -> Result<Color> {
        Ok(match name {
            "red" => Color::Red,
            "green" => Color::Green,
            "blue" => Color::Blue,
            "yellow" => Color::Yellow,
            "purple" => Color::Purple,
            "white" => Color::White,
            other => return Err(Error::Config(format!("unknown color {other:?}"))),
        })
    }

    /// Which of the R, G, B channels carry the digit.
    pub fn mask(self) -> [bool; 3] {
        match self {
            Color::Red => [true, false, false],
            Color::Green => [false, true, false],
            Color::Blue => [false, false, true],
            Color::Yellow => [true, true, false],
            Color::Purple => [true, false, true],
            Color::White => [true, true, true],
        }
    }
}

/// Label-conditional color distribution plus shape-label correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSetting {
    /// Probability that a digit keeps its shape label (0–4 → 0, 5–9 → 1).
    pub shape_correlation: f64,
    /// `colors[y]` lists (color name, probability) for final label `y`.
    pub colors: [Vec<(String, f64)>; 2],
}

impl ColorSetting {
    /// Both labels drawn from the same color table.
    pub fn label_independent(shape_correlation: f64, table: &[(&str, f64)]) -> Self {
        let t: Vec<(String, f64)> = table.iter().map(|(c, p)| (c.to_string(), *p)).collect();
        ColorSetting {
            shape_correlation,
            colors: [t.clone(), t],
        }
    }

    /// `first` goes with label 0 w.p. `strength` and `second` with label 1
    /// w.p. `strength`; the other color takes the remainder.
    pub fn paired(shape_correlation: f64, first: &str, second: &str, strength: f64) -> Self {
        ColorSetting {
            shape_correlation,
            colors: [
                vec![(first.into(), strength), (second.into(), 1.0 - strength)],
                vec![(second.into(), strength), (first.into(), 1.0 - strength)],
            ],
        }
    }

    /// One of the two training domains of the "A%-shape B%-color" settings:
    /// domain 0 ties red to label 0, domain 1 ties red to label 1.
    pub fn two_domain(shape_correlation: f64, color_correlation: f64, domain: usize) -> Self {
        if domain == 0 {
            Self::paired(shape_correlation, "red", "green", color_correlation)
        } else {
            Self::paired(shape_correlation, "green", "red", color_correlation)
        }
    }

    /// Studies 1–6 of the six-domain unequal-color setting.
    pub fn six_domain_study(study: usize) -> Result<Self> {
        Ok(match study {
            1 => Self::paired(1.0, "red", "green", 0.8),
            2 => Self::paired(1.0, "red", "green", 0.6),
            3 => Self::paired(1.0, "red", "green", 0.4),
            4 => Self::paired(1.0, "blue", "yellow", 0.7),
            5 => ColorSetting {
                shape_correlation: 1.0,
                colors: [
                    vec![
                        ("red".into(), 0.7),
                        ("green".into(), 0.2),
                        ("yellow".into(), 0.1),
                    ],
                    vec![
                        ("red".into(), 0.1),
                        ("green".into(), 0.1),
                        ("yellow".into(), 0.8),
                    ],
                ],
            },
            6 => Self::paired(1.0, "red", "blue", 0.8),
            other => return Err(Error::Config(format!("no six-domain study {other}"))),
        })
    }

    /// Test domain with a single color for every digit.
    pub fn solid(shape_correlation: f64, color: &str) -> Self {
        Self::label_independent(shape_correlation, &[(color, 1.0)])
    }

    /// Test domain with red or green chosen independently of the label.
    pub fn red_green_random(shape_correlation: f64) -> Self {
        Self::label_independent(shape_correlation, &[("red", 0.5), ("green", 0.5)])
    }

    fn resolved(&self) -> Result<[Vec<(Color, f64)>; 2]> {
        if !(0.0..=1.0).contains(&self.shape_correlation) {
            return Err(Error::Config(format!(
                "shape_correlation {} is outside [0, 1]",
                self.shape_correlation
            )));
        }
        let resolve = |table: &Vec<(String, f64)>, label: usize| -> Result<Vec<(Color, f64)>> {
            let out = table
                .iter()
                .map(|(name, p)| Ok((Color::from_name(name)?, *p)))
                .collect::<Result<Vec<_>>>()?;
            let total: f64 = out.iter().map(|(_, p)| p).sum();
            if out.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "color probabilities for label {label} sum to {total}, not 1"
                )));
            }
            Ok(out)
        };
        Ok([resolve(&self.colors[0], 0)?, resolve(&self.colors[1], 1)?])
    }
}

/// Binary label from a digit: 0–4 → 0, 5–9 → 1, kept with probability
/// `shape_correlation` and flipped otherwise.
fn shape_label(digit: u8, shape_correlation: f64, rng: &mut Rng) -> u8 {
    let label = u8::from(digit >= 5);
    if rng.bernoulli(shape_correlation) {
        label
    } else {
        1 - label
    }
}

/// Colors every image per `setting`. Per image, the label flip is drawn
/// before the color. Output rows are 3 × 28 × 28 in [0, 1].
pub fn colorize(data: &MnistData, setting: &ColorSetting, rng: &mut Rng) -> Result<DomainDataset> {
    let tables = setting.resolved()?;
    let weights: [Vec<f64>; 2] = [
        tables[0].iter().map(|(_, p)| *p).collect(),
        tables[1].iter().map(|(_, p)| *p).collect(),
    ];
    if data.images.len() != data.len() * PIXELS {
        return Err(Error::shape(
            "colorize images",
            data.len() * PIXELS,
            data.images.len(),
        ));
    }
    let n = data.len();
    let mut xs = vec![0.0; n * COLORED_DIM];
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let y = shape_label(data.labels[i], setting.shape_correlation, rng);
        let choice = rng.categorical(&weights[y as usize]);
        let mask = tables[y as usize][choice].0.mask();
        let row = &mut xs[i * COLORED_DIM..(i + 1) * COLORED_DIM];
        for (c, on) in mask.iter().enumerate() {
            if *on {
                for (dst, &g) in row[c * PIXELS..(c + 1) * PIXELS]
                    .iter_mut()
                    .zip(data.image(i))
                {
                    *dst = f64::from(g) / 255.0;
                }
            }
        }
        ys.push(y);
    }
    DomainDataset::new(0, Matrix::new(n, COLORED_DIM, xs)?, ys)
}
