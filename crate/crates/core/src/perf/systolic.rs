//! Weight-stationary systolic array cycle model.
//!
//! A `K x N` layer is cut into `ceil(K/R) * ceil(N/C)` weight tiles. Each
//! tile streams the batch through the array (fill, `B` rows, drain over the
//! tile's output columns). Weight loads for the next tile are double
//! buffered behind the current tile's compute; the first load is exposed.

use serde::{Deserialize, Serialize};

use crate::catalog::{ModelSpec, BYTES_PER_ELEMENT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubArray {
    pub rows: u32,
    pub cols: u32,
}

impl SubArray {
    pub fn new(rows: u32, cols: u32) -> Self {
        SubArray { rows, cols }
    }

    pub fn area(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

/// Cycle count for one `k x n` layer over a batch of `b` rows.
///
/// `load_bytes_per_cycle` is ignored when the weights are resident.
pub fn systolic_cycles(
    k: u32,
    n: u32,
    b: u32,
    array: SubArray,
    weights_resident: bool,
    load_bytes_per_cycle: f64,
) -> u64 {
    let (r, c) = (array.rows.max(1) as u64, array.cols.max(1) as u64);
    let (k, n, b) = (k.max(1) as u64, n.max(1) as u64, b.max(1) as u64);
    let tiles = k.div_ceil(r) * n.div_ceil(c);
    let compute = b + r + n.min(c) - 1;
    let load = if weights_resident {
        0
    } else {
        let bytes = (k.min(r) * n.min(c) * BYTES_PER_ELEMENT) as f64;
        (bytes / load_bytes_per_cycle).ceil() as u64
    };
    load + tiles * compute.max(load)
}

/// Whether the whole model fits in `sram_share` bytes of weight memory.
pub fn weights_resident(model: &ModelSpec, sram_share: u64) -> bool {
    model.weight_bytes() <= sram_share
}

/// Sum of [`systolic_cycles`] over every bottom and top layer.
pub fn mlp_cycles(
    model: &ModelSpec,
    batch: u32,
    array: SubArray,
    weights_resident: bool,
    load_bytes_per_cycle: f64,
) -> Result<u64> {
    if batch == 0 {
        return Err(Error::Precondition("batch must be >= 1".into()));
    }
    Ok(model
        .layers()
        .map(|(k, n)| systolic_cycles(k, n, batch, array, weights_resident, load_bytes_per_cycle))
        .sum())
}

/// Useful MACs over provisioned MAC-cycles for one model pass.
pub fn mac_utilization(
    model: &ModelSpec,
    batch: u32,
    array: SubArray,
    weights_resident: bool,
    load_bytes_per_cycle: f64,
) -> Result<f64> {
    let cycles = mlp_cycles(model, batch, array, weights_resident, load_bytes_per_cycle)?;
    Ok(batch as f64 * model.macs_per_item() as f64 / (array.area() as f64 * cycles as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    const BPC: f64 = 256.0;

    #[test]
    fn single_tile_single_row() {
        assert_eq!(systolic_cycles(128, 128, 1, SubArray::new(128, 128), true, BPC), 256);
    }

    #[test]
    fn two_tiles() {
        // 2 tiles x (64 + 128 + 128 - 1)
        assert_eq!(systolic_cycles(256, 128, 64, SubArray::new(128, 128), true, BPC), 638);
    }

    #[test]
    fn weight_loads_exposed_once() {
        // per-tile load 128*128*4/256 = 256 > compute 1+128+128-1 = 256
        let a = SubArray::new(128, 128);
        assert_eq!(systolic_cycles(256, 128, 1, a, false, BPC), 256 + 2 * 256);
        // slow memory makes loads dominate every tile
        assert_eq!(systolic_cycles(256, 128, 1, a, false, 64.0), 1024 + 2 * 1024);
    }

    #[test]
    fn rm_small_layer_sum() {
        let c = Catalog::default_catalog();
        let m = c.model("RM_small").unwrap();
        let a = SubArray::new(128, 128);
        let cycles = mlp_cycles(m, 4096, a, true, BPC).unwrap();
        // drain widths 64, 4 and 1
        assert_eq!(cycles, (4096 + 128 + 63) + (4096 + 128 + 3) + (4096 + 128));
        assert!(mlp_cycles(m, 0, a, true, BPC).is_err());
        let u = mac_utilization(m, 256, a, true, BPC).unwrap();
        assert!(u < 0.10, "{u}");
    }

    #[test]
    fn rm_large_small_array_trades_latency_for_utilization() {
        let c = Catalog::default_catalog();
        let m = c.model("RM_large").unwrap();
        let (big, small) = (SubArray::new(128, 128), SubArray::new(32, 32));
        let cb = mlp_cycles(m, 256, big, true, BPC).unwrap();
        let cs = mlp_cycles(m, 256, small, true, BPC).unwrap();
        assert_eq!(cb, 8400);
        assert!(cs > cb);
        let ub = mac_utilization(m, 256, big, true, BPC).unwrap();
        let us = mac_utilization(m, 256, small, true, BPC).unwrap();
        assert!(us >= 2.0 * ub, "{us} vs {ub}");
        // the gap widens to 4x once fill and drain dominate
        let ub = mac_utilization(m, 16, big, true, BPC).unwrap();
        let us = mac_utilization(m, 16, small, true, BPC).unwrap();
        assert!(us >= 4.0 * ub, "{us} vs {ub}");
    }

    #[test]
    fn aligned_large_batch_approaches_full_utilization() {
        let u = systolic_cycles(128, 128, 1 << 20, SubArray::new(128, 128), true, BPC);
        let util = (1u64 << 20) as f64 * 128.0 * 128.0 / (128.0 * 128.0 * u as f64);
        assert!(util > 0.999, "{util}");
    }
}
