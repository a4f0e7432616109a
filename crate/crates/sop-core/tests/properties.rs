//! Property-based invariants over randomly generated inputs: partition
//! coverage and slice round-trips, tensor-file serialization, layer-norm
//! row statistics, and window tiling arithmetic.

use proptest::prelude::*;

use sop_core::data::{decode_tensor, make_windows, tensor_bytes};
use sop_core::numerics::ops;
use sop_core::plug::{extract_group, partition, scatter_group, Axis};
use sop_core::Tensor32;

fn axis_strategy() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::Variable), Just(Axis::Step)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Groups are contiguous, disjoint, cover the axis, and sizes differ
    /// by at most one (earlier groups take the extra).
    #[test]
    fn partition_covers_axis(
        axis in axis_strategy(),
        n in 1usize..24,
        s in 1usize..24,
        count_frac in 0.0f64..1.0,
    ) {
        let len = match axis { Axis::Variable => n, Axis::Step => s };
        let count = 1 + ((len - 1) as f64 * count_frac) as usize;
        let spec = partition(axis, n, s, count).unwrap();
        prop_assert_eq!(spec.plug_count(), count);
        prop_assert_eq!(spec.groups[0].start, 0);
        prop_assert_eq!(spec.groups.last().unwrap().end, len);
        let mut sizes = Vec::new();
        for w in spec.groups.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start, "contiguous, disjoint");
        }
        for g in &spec.groups {
            prop_assert!(g.end > g.start, "no empty groups");
            sizes.push(g.end - g.start);
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "balanced sizes, got {:?}", sizes);
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "front-loaded");
        // io widths sum to the whole target space
        let total: usize = (0..count).map(|gi| spec.group_io(gi)).sum();
        prop_assert_eq!(total, n * s);
    }

    /// Extracting every group and scattering it back rebuilds the stack
    /// bit for bit, for both axes and any window count.
    #[test]
    fn extract_scatter_is_identity(
        axis in axis_strategy(),
        w in 1usize..6,
        n in 1usize..10,
        s in 1usize..10,
        count_frac in 0.0f64..1.0,
        seed in any::<u32>(),
    ) {
        let len = match axis { Axis::Variable => n, Axis::Step => s };
        let count = 1 + ((len - 1) as f64 * count_frac) as usize;
        let spec = partition(axis, n, s, count).unwrap();
        let mut rng = sop_core::numerics::Rng::new(seed as u64);
        let stack = Tensor32::new(
            vec![w, n, s],
            (0..w * n * s).map(|_| rng.next_normal() as f32).collect(),
        ).unwrap();
        let mut rebuilt = Tensor32::zeros(vec![w, n, s]);
        for gi in 0..spec.plug_count() {
            let x = extract_group(&stack, &spec, gi).unwrap();
            prop_assert_eq!(x.shape(), &[w, spec.group_io(gi)]);
            scatter_group(&mut rebuilt, &spec, gi, &x).unwrap();
        }
        prop_assert_eq!(stack, rebuilt);
    }

    /// Encode → decode is the identity on shape and bits.
    #[test]
    fn tensor_file_round_trips(
        dims in prop::collection::vec(1usize..5, 1..4),
        seed in any::<u32>(),
    ) {
        let numel: usize = dims.iter().product();
        let mut rng = sop_core::numerics::Rng::new(seed as u64);
        let t = Tensor32::new(
            dims.clone(),
            (0..numel).map(|_| rng.next_normal() as f32).collect(),
        ).unwrap();
        let bytes = tensor_bytes(&t);
        let back = decode_tensor(&bytes).unwrap();
        prop_assert_eq!(&t, &back);
        // any truncation is rejected
        if bytes.len() > 1 {
            prop_assert!(decode_tensor(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    /// Every normalized row has mean ≈ 0 and population variance ≈ 1
    /// (unless the row was constant, which maps to exact zeros).
    #[test]
    fn layer_norm_rows_are_standardized(
        rows in 1usize..5,
        width in 2usize..32,
        seed in any::<u32>(),
    ) {
        let mut rng = sop_core::numerics::Rng::new(seed as u64);
        let x: Vec<f32> = (0..rows * width).map(|_| (rng.next_normal() * 3.0) as f32).collect();
        let mut out = vec![0.0f32; x.len()];
        ops::layer_norm_rows(&x, rows, width, 1e-12, &mut out);
        for r in 0..rows {
            let row = &out[r * width..(r + 1) * width];
            let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / width as f64;
            let var: f64 = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / width as f64;
            prop_assert!(mean.abs() < 1e-4, "row {} mean {}", r, mean);
            prop_assert!((var - 1.0).abs() < 1e-3, "row {} var {}", r, var);
        }
    }

    /// Window origins tile the range: count matches the closed formula,
    /// consecutive origins differ by exactly the stride, and every window
    /// stays inside the range.
    #[test]
    fn window_tiling_matches_formula(
        len in 2usize..200,
        t in 1usize..20,
        s in 1usize..20,
        stride in 1usize..10,
    ) {
        prop_assume!(len >= t + s);
        let n = 2;
        let values: Vec<f32> = (0..len)
            .flat_map(|i| [i as f32, (i * 2) as f32])
            .collect();
        let names: Vec<String> = (0..n).map(|v| format!("v{v}")).collect();
        let series = sop_core::data::RawSeries::new(
            "tiling".into(),
            names,
            None,
            values,
        ).unwrap();
        let stats = sop_core::data::NormStats::fit(&series, 0..len).unwrap();
        let ws = make_windows(&series, &stats, 0..len, t, s, stride).unwrap();
        let want = (len - t - s) / stride + 1;
        prop_assert_eq!(ws.samples.len(), want);
        for (k, sample) in ws.samples.iter().enumerate() {
            prop_assert_eq!(sample.origin, k * stride);
            prop_assert!(sample.origin + t + s <= len);
            // x really is rows origin..origin+t of the series, normalized
            prop_assert_eq!(sample.x.at(&[0, 0]), stats.normalize(sample.origin as f32, 0));
            prop_assert_eq!(sample.y.at(&[0, 0]), stats.normalize((sample.origin + t) as f32, 0));
        }
    }
}
