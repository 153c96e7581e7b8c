use std::collections::HashMap;

use ffc_core::bitstream::Mode;
use ffc_core::entropy::QuantSpec;
use ffc_core::harness::{
    decode_cloud, encode_edge, generate_scene, reconstruct_objects, sweep, write_csv, EncodeConfig,
    GridConfig, SceneSpec,
};
use ffc_core::reconstruct::{RefDensifier, ResidualParams};
use ffc_core::voxel::{Coord, SparseTensor};

fn rows_by_coord(t: &SparseTensor) -> HashMap<Coord, Vec<f64>> {
    (0..t.len()).map(|i| (t.coords()[i], t.row(i).to_vec())).collect()
}

fn assert_quantized_equal(encoder: &SparseTensor, decoded: &SparseTensor, q: QuantSpec) {
    assert_eq!(encoder.coord_set(), decoded.coord_set());
    let dec = rows_by_coord(decoded);
    for (c, row) in rows_by_coord(encoder) {
        let want: Vec<f64> = row.iter().map(|v| q.dequantize(q.quantize(*v))).collect();
        assert_eq!(dec[&c], want, "row at {c:?}");
    }
}

#[test]
fn decoded_frames_match_encoder_state() {
    for seed in 0..4 {
        let spec = SceneSpec {
            seed,
            ..Default::default()
        };
        let (scene, _) = generate_scene(&spec).unwrap();
        for mode in [Mode::Tffc, Mode::Affc] {
            let cfg = EncodeConfig {
                mode,
                residual: Some(ResidualParams::default()),
                fgc: ffc_core::fgc::FgcParams {
                    d_p: seed as f64,
                    ..Default::default()
                },
                ..Default::default()
            };
            let q = QuantSpec::new(cfg.quant_step).unwrap().as_transmitted();
            let edge = encode_edge(&scene, &cfg).unwrap();
            let dec = decode_cloud(&edge.bytes).unwrap();
            assert_quantized_equal(&edge.basic, &dec.basic, q);
            if let Some(p) = &edge.affc {
                assert_quantized_equal(&p.branch3, dec.branch3.as_ref().unwrap(), q);
                assert_quantized_equal(&p.branch4, dec.branch4.as_ref().unwrap(), q);
            } else {
                assert!(dec.branch3.is_none() && dec.branch4.is_none());
            }
            assert_eq!(Some(&dec.residual.unwrap().flags), edge.residual.as_ref());
        }
    }
}

#[test]
fn objects_reconstruct_inside_their_boxes() {
    let (scene, gt) = generate_scene(&SceneSpec::default()).unwrap();
    let cfg = EncodeConfig {
        residual: Some(ResidualParams::default()),
        ..Default::default()
    };
    let dec = decode_cloud(&encode_edge(&scene, &cfg).unwrap().bytes).unwrap();
    let objs = reconstruct_objects(&dec, &gt.boxes, &RefDensifier { seed: 1 }, 1).unwrap();
    assert_eq!(objs.len(), gt.boxes.len());
    assert!(objs.iter().any(|o| !o.sparse.is_empty()));
    for o in &objs {
        let b = &gt.boxes[o.box_index];
        assert!(o.sparse.iter().all(|p| b.contains(*p)));
        assert_eq!(o.dense.len(), 4 * 30 * (o.sparse.len() / 30));
    }
}

#[test]
fn sweep_csv_is_ordered_and_stable() {
    let spec = SceneSpec {
        dims: [64, 64, 16],
        objects: 2,
        size_min: [8.0, 5.0, 4.0],
        size_max: [14.0, 8.0, 6.0],
        ..Default::default()
    };
    let grid = GridConfig {
        seeds: vec![5, 1, 3],
        k_th: vec![0.05, 0.01],
        d_p: vec![0.0, 3.0],
        ..Default::default()
    };
    let rows = sweep(&spec, &grid).unwrap();
    let keys: Vec<(u64, Mode, f64, f64)> = rows.iter().map(|r| (r.scene_seed, r.mode, r.k_th, r.d_p)).collect();
    let mut want = Vec::new();
    for &s in &grid.seeds {
        for m in &grid.modes {
            for &k in &grid.k_th {
                for &d in &grid.d_p {
                    want.push((s, m.mode, k, d));
                }
            }
        }
    }
    assert_eq!(keys, want);
    let csv = |rows| {
        let mut buf = Vec::new();
        write_csv(&mut buf, rows).unwrap();
        buf
    };
    assert_eq!(csv(&rows), csv(&sweep(&spec, &grid).unwrap()));
}
