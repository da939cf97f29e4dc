//! Triangulation, warping and the fitted teacher against brute-force and
//! eigen-decomposition oracles.

mod support;

use lmface::aam::{procedural_corpus, AamCode, AamModel, Point, ProceduralConfig, Triangulation};
use lmface::io::{load_image, read_landmarks, save_image, write_landmarks};
use lmface::numerics::DenseMatrix;
use support::*;

fn corpus(n: usize, seed: u64) -> lmface::aam::Corpus {
    procedural_corpus(&ProceduralConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn delaunay_random_points_pass_brute_force() {
    for seed in 0..100 {
        let (bad, area) = delaunay_probe(seed);
        assert_eq!(bad, 0, "seed {seed}");
        assert!(area < 1e-9, "seed {seed}: hull area mismatch {area:e}");
    }
}

#[test]
fn delaunay_on_face_landmarks_with_anchors() {
    let c = corpus(30, 3);
    for lm in &c.landmarks {
        let tri = Triangulation::with_frame_anchors(lm, 32, 32).unwrap();
        let (bad, area) = delaunay_violations(&tri.vertices, &tri);
        assert_eq!(bad, 0);
        assert!(area < 1e-9);
        assert!((hull_area(&tri.vertices) - 31.0 * 31.0).abs() < 1e-9);
    }
}

#[test]
fn warp_onto_own_landmarks_is_identity() {
    for seed in 0..5 {
        let e = warp_identity(seed);
        assert!(e <= 1e-6, "seed {seed}: {e:e}");
    }
}

#[test]
fn appearance_basis_matches_gram_eigenvectors() {
    // Texture dimension is in the hundreds, so the oracle diagonalizes the
    // n × n Gram matrix and maps its eigenvectors back.
    let c = corpus(60, 11);
    let model = AamModel::fit(&c.images, &c.landmarks, 5, 5).unwrap();
    let textures: Vec<Vec<f64>> = c
        .images
        .iter()
        .zip(&c.landmarks)
        .map(|(img, lm)| {
            let tri = &model.triangulation;
            let free = lmface::aam::warp_image(img, lm, &model.shape.mean_shape, tri).unwrap();
            model.appearance.masked_pixels(&free.image)
        })
        .collect();
    let x = DenseMatrix::from_rows(&textures).unwrap();
    let (n, dim) = (x.rows(), x.cols());
    let mean = x.column_means();
    let centred: Vec<Vec<f64>> = textures
        .iter()
        .map(|t| t.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(&gram);
    for k in 0..5 {
        let mut comp = vec![0.0; dim];
        for (i, row) in centred.iter().enumerate() {
            comp.iter_mut()
                .zip(row)
                .for_each(|(c, v)| *c += vecs[k][i] * v);
        }
        let norm = comp.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fitted = model.appearance.basis.components.row(k);
        let dot: f64 = fitted.iter().zip(&comp).map(|(a, b)| a * b / norm).sum();
        assert!(
            (dot.abs() - 1.0).abs() < 1e-8,
            "component {k}: |cos| = {}",
            dot.abs()
        );
        let var = vals[k] / (n - 1) as f64;
        let sd = model.appearance.basis.component_sds[k];
        assert!((sd * sd - var).abs() < 1e-8 * vals[0], "component {k}");
    }
}

#[test]
fn corpus_codes_and_images_are_reproducible() {
    use rand::SeedableRng;
    let a = corpus(40, 8);
    let b = corpus(40, 8);
    assert_eq!(a.landmarks, b.landmarks);
    assert!(a.images.iter().zip(&b.images).all(|(x, y)| x == y));
    let model = AamModel::fit(&a.images, &a.landmarks, 5, 5).unwrap();
    let again = AamModel::fit(&b.images, &b.landmarks, 5, 5).unwrap();
    assert_eq!(model, again);
    let draw = |s| {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        model.sample_codes(10, &mut r).unwrap()
    };
    assert_eq!(draw(1), draw(1));
    assert_ne!(draw(1), draw(2));
    let codes = draw(1);
    for code in &codes {
        let x = model.synthesize(code).unwrap().image;
        let y = model.synthesize(code).unwrap().image;
        assert_eq!(x, y);
        assert!(x.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn mean_code_renders_mean_face_inside_the_hull() {
    let c = corpus(40, 2);
    let model = AamModel::fit(&c.images, &c.landmarks, 5, 5).unwrap();
    let img = model.synthesize(&AamCode::zeros(5, 5)).unwrap().image;
    let tex = model
        .appearance
        .texture_image(model.appearance.mean_texture())
        .unwrap();
    for (i, m) in model.appearance.mask.iter().enumerate() {
        if *m {
            assert!((img.pixels()[i] - tex.pixels()[i].clamp(-1.0, 1.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(20, 4);
    let lm_path = dir.path().join("face.pts");
    write_landmarks(&lm_path, &c.landmarks[0]).unwrap();
    let back = read_landmarks(&lm_path).unwrap();
    for (p, q) in back.points.iter().zip(&c.landmarks[0].points) {
        assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
    }
    for ext in ["png", "pgm"] {
        let path = dir.path().join(format!("face.{ext}"));
        save_image(&path, &c.images[0]).unwrap();
        let img = load_image(&path).unwrap();
        // 8-bit quantization of [-1, 1] is at most half a step.
        assert!(img.max_abs_diff(&c.images[0]) <= 1.0 / 255.0 + 1e-12);
    }
    let model = AamModel::fit(&c.images, &c.landmarks, 3, 3).unwrap();
    assert_eq!(
        AamModel::from_json(&model.to_json().unwrap()).unwrap(),
        model
    );
}

#[test]
fn point_helpers() {
    assert_eq!(
        hull_area(&[
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
            Point::new(0.5, 0.5)
        ]),
        2.0
    );
}
