//! Validation/test assignment of images.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use boxfuse_core::dataset::Split;
use boxfuse_core::{Dataset, ImageId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Explicit image lists, as read from a split file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLists {
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Shuffle image ids with `seed` and put the first `validation_fraction` in validation.
    Ratio {
        validation_fraction: f64,
        seed: u64,
    },
    Explicit(SplitLists),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ratio {
            validation_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let lists: SplitLists =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(SplitSpec::Explicit(lists))
    }
}

/// Image sets `(validation, test)` for `ds`.
pub fn assign(ds: &Dataset, spec: &SplitSpec) -> Result<(BTreeSet<ImageId>, BTreeSet<ImageId>)> {
    match spec {
        SplitSpec::Ratio {
            validation_fraction,
            seed,
        } => {
            if !(0.0..=1.0).contains(validation_fraction) {
                bail!("validation fraction {validation_fraction} must lie in [0, 1]");
            }
            let mut ids: Vec<ImageId> = ds.images.iter().copied().collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            let k = (ids.len() as f64 * validation_fraction).round() as usize;
            let test = ids.split_off(k);
            Ok((ids.into_iter().collect(), test.into_iter().collect()))
        }
        SplitSpec::Explicit(lists) => {
            let pick = |ids: &[u64], what: &str| -> Result<BTreeSet<ImageId>> {
                ids.iter()
                    .map(|&i| {
                        let id = ImageId(i);
                        if ds.images.contains(&id) {
                            Ok(id)
                        } else {
                            bail!("{what} split lists image {i}, which the ground truth does not contain")
                        }
                    })
                    .collect()
            };
            let val = pick(&lists.validation, "validation")?;
            let test = pick(&lists.test, "test")?;
            if let Some(both) = val.intersection(&test).next() {
                bail!("image {both} is in both the validation and the test split");
            }
            Ok((val, test))
        }
    }
}

/// `(validation, test)` datasets.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (val, test) = assign(ds, spec)?;
    Ok((
        ds.subset(&val, Split::Validation),
        ds.subset(&test, Split::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(n: u64) -> Dataset {
        Dataset::new((0..n).map(ImageId), [], [], Split::Validation)
    }

    #[test]
    fn ratio_split_is_seeded_and_disjoint() {
        let d = ds(11);
        let spec = SplitSpec::Ratio {
            validation_fraction: 0.5,
            seed: 4,
        };
        let (v, t) = assign(&d, &spec).unwrap();
        assert_eq!(v.len() + t.len(), 11);
        assert_eq!(v.len(), 6);
        assert!(v.is_disjoint(&t));
        assert_eq!(assign(&d, &spec).unwrap(), (v, t));
    }

    #[test]
    fn explicit_lists_are_checked() {
        let d = ds(4);
        let ok = SplitSpec::Explicit(SplitLists {
            validation: vec![0, 1],
            test: vec![3],
        });
        let (v, t) = assign(&d, &ok).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(t.len(), 1);
        let unknown = SplitSpec::Explicit(SplitLists {
            validation: vec![9],
            test: vec![],
        });
        assert!(assign(&d, &unknown).is_err());
        let overlap = SplitSpec::Explicit(SplitLists {
            validation: vec![1],
            test: vec![1],
        });
        assert!(assign(&d, &overlap).is_err());
    }
}
