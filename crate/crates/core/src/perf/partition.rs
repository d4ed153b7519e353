//! Splitting the monolithic MAC array into per-stage groups of sub-arrays.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::AccelSpec;
use crate::error::{Error, Result};

use super::systolic::SubArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubArrayGroup {
    /// Stage served by this group; `None` means shared by every stage.
    pub stage: Option<usize>,
    pub n_subarrays: u32,
    pub shape: SubArray,
}

impl SubArrayGroup {
    pub fn area(&self) -> u64 {
        self.n_subarrays as u64 * self.shape.area()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayPartition {
    pub groups: Vec<SubArrayGroup>,
}

/// Power-of-two sub-array shape of the given area with `rows >= cols`.
fn shape_for_area(area: u64, accel: &AccelSpec) -> Result<SubArray> {
    if area == 0 || !area.is_power_of_two() {
        return Err(Error::Config(format!(
            "sub-array area {area} is not a power of two"
        )));
    }
    let log = area.trailing_zeros();
    let rows = 1u64 << log.div_ceil(2);
    let cols = area / rows;
    if rows > accel.array_rows as u64 || cols > accel.array_cols as u64 {
        return Err(Error::Config(format!(
            "{rows}x{cols} sub-array does not fit the {}x{} array",
            accel.array_rows, accel.array_cols
        )));
    }
    Ok(SubArray::new(rows as u32, cols as u32))
}

impl ArrayPartition {
    /// The whole array as a single shared unit.
    pub fn monolithic(accel: &AccelSpec) -> Self {
        ArrayPartition {
            groups: vec![SubArrayGroup {
                stage: None,
                n_subarrays: 1,
                shape: SubArray::new(accel.array_rows, accel.array_cols),
            }],
        }
    }

    /// One group per stage, each with an equal share of the array area,
    /// cut into `counts[s]` identical sub-arrays.
    pub fn per_stage(counts: &[u32], accel: &AccelSpec) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Config("partition needs at least one stage".into()));
        }
        let total = accel.array_area();
        let n_groups = counts.len() as u64;
        if total % n_groups != 0 {
            return Err(Error::Config(format!(
                "array area {total} does not split into {n_groups} groups"
            )));
        }
        let groups = counts
            .iter()
            .enumerate()
            .map(|(s, &n)| {
                if n == 0 || !n.is_power_of_two() {
                    return Err(Error::Config(format!(
                        "stage {s}: sub-array count {n} is not a power of two"
                    )));
                }
                let per = total / n_groups / n as u64;
                Ok(SubArrayGroup {
                    stage: Some(s),
                    n_subarrays: n,
                    shape: shape_for_area(per, accel)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = ArrayPartition { groups };
        p.check_area(accel)?;
        Ok(p)
    }

    /// Explicit `(count, rows, cols)` per stage, in stage order.
    pub fn from_groups(groups: &[(u32, u32, u32)], accel: &AccelSpec) -> Result<Self> {
        let p = ArrayPartition {
            groups: groups
                .iter()
                .enumerate()
                .map(|(s, &(n, r, c))| SubArrayGroup {
                    stage: Some(s),
                    n_subarrays: n,
                    shape: SubArray::new(r, c),
                })
                .collect(),
        };
        if p.groups.iter().any(|g| g.shape.rows > accel.array_rows || g.shape.cols > accel.array_cols) {
            return Err(Error::Config("sub-array larger than the array".into()));
        }
        p.validate(accel, groups.len())?;
        Ok(p)
    }

    /// Two-stage partition with `a` frontend and `b` backend sub-arrays.
    pub fn split(a: u32, b: u32, accel: &AccelSpec) -> Result<Self> {
        Self::per_stage(&[a, b], accel)
    }

    pub fn is_shared(&self) -> bool {
        self.groups.len() == 1 && self.groups[0].stage.is_none()
    }

    pub fn total_area(&self) -> u64 {
        self.groups.iter().map(SubArrayGroup::area).sum()
    }

    fn check_area(&self, accel: &AccelSpec) -> Result<()> {
        if self.total_area() > accel.array_area() {
            return Err(Error::Config(format!(
                "partition area {} exceeds the {} MAC array",
                self.total_area(),
                accel.array_area()
            )));
        }
        Ok(())
    }

    /// Checks the area budget and that every stage maps to exactly one group.
    pub fn validate(&self, accel: &AccelSpec, n_stages: usize) -> Result<()> {
        self.check_area(accel)?;
        if self.groups.is_empty() {
            return Err(Error::Config("partition has no groups".into()));
        }
        if self.groups.iter().any(|g| g.n_subarrays == 0) {
            return Err(Error::Config("group with zero sub-arrays".into()));
        }
        let shared = self.groups.iter().filter(|g| g.stage.is_none()).count();
        if shared > 0 {
            if self.groups.len() != 1 {
                return Err(Error::Config(
                    "a shared group cannot coexist with per-stage groups".into(),
                ));
            }
            return Ok(());
        }
        for s in 0..n_stages {
            let hits = self.groups.iter().filter(|g| g.stage == Some(s)).count();
            if hits != 1 {
                return Err(Error::Config(format!(
                    "stage {s} maps to {hits} sub-array groups"
                )));
            }
        }
        if let Some(g) = self.groups.iter().find(|g| g.stage.unwrap_or(0) >= n_stages) {
            return Err(Error::Config(format!(
                "group for stage {:?} but the pipeline has {n_stages} stages",
                g.stage
            )));
        }
        Ok(())
    }

    /// Index of the group serving `stage`.
    pub fn group_of(&self, stage: usize) -> Result<usize> {
        if self.is_shared() {
            return Ok(0);
        }
        self.groups
            .iter()
            .position(|g| g.stage == Some(stage))
            .ok_or_else(|| Error::Config(format!("no sub-array group for stage {stage}")))
    }

    /// Weight SRAM available to one sub-array of `group`, proportional to area.
    pub fn sram_share(&self, group: usize, accel: &AccelSpec) -> u64 {
        let g = &self.groups[group];
        (accel.weight_sram_bytes as u128 * g.shape.area() as u128 / accel.array_area() as u128)
            as u64
    }
}

impl fmt::Display for ArrayPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_shared() {
            return f.write_str("mono");
        }
        let counts: Vec<String> = self.groups.iter().map(|g| g.n_subarrays.to_string()).collect();
        write!(f, "P({})", counts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_splits() {
        let a = AccelSpec::default();
        let p = ArrayPartition::split(8, 2, &a).unwrap();
        assert_eq!(p.groups[0].shape, SubArray::new(32, 32));
        assert_eq!(p.groups[1].shape, SubArray::new(64, 64));
        assert_eq!(p.to_string(), "P(8,2)");
        let p = ArrayPartition::split(8, 16, &a).unwrap();
        assert_eq!(p.groups[1].shape, SubArray::new(32, 16));
        assert_eq!(p.total_area(), a.array_area());
        p.validate(&a, 2).unwrap();
        assert!(p.validate(&a, 3).is_err());
        assert_eq!(ArrayPartition::split(1, 1, &a).unwrap().groups[0].shape, SubArray::new(128, 64));
    }

    #[test]
    fn monolithic_is_shared() {
        let a = AccelSpec::default();
        let p = ArrayPartition::monolithic(&a);
        assert!(p.is_shared());
        p.validate(&a, 3).unwrap();
        assert_eq!(p.group_of(2).unwrap(), 0);
        assert_eq!(p.sram_share(0, &a), a.weight_sram_bytes);
        assert_eq!(p.to_string(), "mono");
    }

    #[test]
    fn explicit_groups() {
        let a = AccelSpec::default();
        let p = ArrayPartition::from_groups(&[(4, 32, 32), (4, 32, 32), (2, 64, 64)], &a).unwrap();
        assert_eq!(p.total_area(), a.array_area());
        assert_eq!(p.to_string(), "P(4,4,2)");
        assert!(ArrayPartition::from_groups(&[(4, 64, 64), (4, 64, 64)], &a).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = AccelSpec::default();
        assert!(ArrayPartition::split(3, 2, &a).is_err());
        let mut p = ArrayPartition::split(8, 8, &a).unwrap();
        p.groups[1].n_subarrays = 16;
        assert!(p.validate(&a, 2).is_err());
        let mut p = ArrayPartition::split(8, 8, &a).unwrap();
        p.groups.push(SubArrayGroup {
            stage: None,
            n_subarrays: 1,
            shape: SubArray::new(1, 1),
        });
        assert!(p.validate(&a, 2).is_err());
    }
}
