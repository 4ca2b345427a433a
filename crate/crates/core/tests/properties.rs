use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

use xlingua::analogy_bench::nearest;
use xlingua::embedding_store::{center_columns, read_space};
use xlingua::linear_maps::least_squares_loss;
use xlingua::{
    apply_map, evaluate, fit_least_squares, fit_orthogonal, AlignedMatrices, AnalogyCorpus, Category, EvalSettings,
    ExperimentTag, LinearMap, LoadOptions, Method, PostProcessing, SemanticSpace,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
}

fn space_from(values: &[f64], rows: usize, cols: usize) -> SemanticSpace {
    let vocab = (0..rows).map(|i| format!("w{i}")).collect();
    SemanticSpace::new("xx", vocab, Array2::from_shape_vec((rows, cols), values.to_vec()).unwrap()).unwrap()
}

fn orthogonal(values: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, &values[..d * d]).qr().q()
}

fn rows_and_query() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (10usize..40, 2usize..6).prop_flat_map(|(n, d)| (Just(n), Just(d), matrix(n, d), matrix(1, d)))
}

proptest! {
    #[test]
    fn rankings_survive_power_of_two_scaling((n, d, values, query) in rows_and_query(), exp in -4i32..4) {
        let space = space_from(&values, n, d);
        let scale = 2f64.powi(exp);
        let scaled: Vec<f64> = values.iter().map(|x| x * scale).collect();
        let scaled = space_from(&scaled, n, d);
        let q = Array1::from(query);
        prop_assert_eq!(nearest(&space, &q, 5, n, &[0]), nearest(&scaled, &(&q * scale), 5, n, &[0]));
    }

    #[test]
    fn rankings_survive_rotation((n, d, values, query) in rows_and_query(), rot in matrix(6, 6)) {
        let space = space_from(&values, n, d);
        let mut map = LinearMap::identity(d, Method::Orthogonal, "xx", PostProcessing::None);
        map.matrix = orthogonal(&rot, d);
        let rotated = apply_map(&map, &space).unwrap();
        let q = Array1::from(query.clone());
        let qr = DMatrix::from_row_slice(1, d, &query) * &map.matrix;
        let qr = Array1::from(qr.iter().copied().collect::<Vec<_>>());
        let before = nearest(&space, &q, 3, n, &[]);
        let after = nearest(&rotated, &qr, 3, n, &[]);
        let cos = |s: &SemanticSpace, v: &Array1<f64>, i: usize| s.row(i).dot(v) / (s.norms()[i] * v.dot(v).sqrt());
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((cos(&space, &q, *a) - cos(&rotated, &qr, *b)).abs() < 1e-9);
        }
    }

    #[test]
    fn search_limit_restricts_candidates((n, d, values, query) in rows_and_query(), limit in 1usize..40) {
        let space = space_from(&values, n, d);
        let found = nearest(&space, &Array1::from(query), 5, limit, &[]);
        prop_assert!(found.iter().all(|&i| i < limit));
        prop_assert!(found.len() <= 5.min(limit));
    }

    #[test]
    fn tags_round_trip(mode in 0usize..2, method in 0usize..3, post in 0usize..4) {
        let mode = [xlingua::Mode::Bilingual, xlingua::Mode::Multilingual][mode];
        let method = [Method::LeastSquares, Method::Orthogonal, Method::Cca][method];
        let tag = ExperimentTag::new(mode, method, PostProcessing::ALL[post]);
        let text = tag.to_string();
        prop_assert_eq!(text.parse::<ExperimentTag>().unwrap(), tag);
        prop_assert!(!text.contains("none"));
    }

    #[test]
    fn tag_parser_never_panics(s in "\\PC{0,16}") {
        let _ = s.parse::<ExperimentTag>();
    }

    #[test]
    fn limited_load_is_a_prefix((n, d, values, _q) in rows_and_query(), limit in 1usize..50) {
        let space = space_from(&values, n, d);
        let mut text = Vec::new();
        space.write_word2vec(&mut text).unwrap();
        let full = read_space(&text[..], "mem", "xx", &LoadOptions::default()).unwrap();
        let opts = LoadOptions { limit: Some(limit), ..LoadOptions::default() };
        let part = read_space(&text[..], "mem", "xx", &opts).unwrap();
        let k = limit.min(n);
        prop_assert_eq!(part.vocab(), &full.vocab()[..k]);
        prop_assert_eq!(part.matrix(), &full.matrix().slice(ndarray::s![..k, ..]).to_owned());
        prop_assert_eq!(full.matrix(), space.matrix());
    }

    #[test]
    fn centering_is_idempotent((n, d, values, _q) in rows_and_query()) {
        let mut once = Array2::from_shape_vec((n, d), values).unwrap();
        center_columns(&mut once);
        let mut twice = once.clone();
        center_columns(&mut twice);
        let diff = (&once - &twice).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        prop_assert!(diff < 1e-12);
        let mean = once.mean_axis(ndarray::Axis(0)).unwrap();
        prop_assert!(mean.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn normalized_rows_are_unit_or_zero((n, d, mut values, _q) in rows_and_query(), zero in 0usize..10) {
        values[zero * d..(zero + 1) * d].iter_mut().for_each(|x| *x = 0.0);
        let unit = space_from(&values, n, d).postprocess(PostProcessing::Cu).unwrap();
        for norm in unit.norms() {
            prop_assert!((norm - 1.0).abs() < 1e-12 || *norm == 0.0);
        }
    }

    #[test]
    fn acc_at_one_never_exceeds_acc_at_k(values in matrix(30, 4), picks in prop::collection::vec(0usize..30, 12)) {
        let space = space_from(&values, 30, 4);
        let mut corpus = AnalogyCorpus::new();
        let pairs: Vec<(String, String)> = picks.chunks(2).map(|p| (format!("w{}", p[0]), format!("w{}", p[1]))).collect();
        corpus.insert_pairs(Category::Family, "xx", pairs);
        let report = evaluate(&space, &space, &corpus, "xx", "xx", &EvalSettings::default()).unwrap();
        prop_assert!(report.acc1 <= report.acck);
        for c in &report.categories {
            prop_assert!(c.correct_at_1 <= c.correct_at_k && c.correct_at_k + c.oov <= c.questions);
        }
    }

    #[test]
    fn least_squares_beats_perturbations(n in 12usize..30, a in matrix(30, 4), b in matrix(30, 4), delta in matrix(4, 4)) {
        let d = 4;
        let xa = DMatrix::from_row_slice(n, d, &a[..n * d]);
        let xb = DMatrix::from_row_slice(n, d, &b[..n * d]);
        let am = AlignedMatrices::from_matrices(xa, xb).unwrap();
        let t = fit_least_squares(&am).unwrap().matrix;
        let perturbed = &t + DMatrix::from_row_slice(d, d, &delta) * 0.01;
        prop_assert!(least_squares_loss(&am, &t) <= least_squares_loss(&am, &perturbed) + 1e-12);
    }

    #[test]
    fn procrustes_beats_random_rotations(n in 8usize..30, a in matrix(30, 4), b in matrix(30, 4), q in matrix(4, 4)) {
        let d = 4;
        let xa = DMatrix::from_row_slice(n, d, &a[..n * d]);
        let xb = DMatrix::from_row_slice(n, d, &b[..n * d]);
        let am = AlignedMatrices::from_matrices(xa, xb).unwrap();
        let t = fit_orthogonal(&am).unwrap().matrix;
        prop_assert!(((t.transpose() * &t) - DMatrix::identity(d, d)).norm() < 1e-10);
        prop_assert!(least_squares_loss(&am, &t) <= least_squares_loss(&am, &orthogonal(&q, d)) + 1e-10);
    }

    #[test]
    fn maps_round_trip_through_text(values in matrix(5, 5)) {
        let mut map = LinearMap::identity(5, Method::Cca, "de", PostProcessing::Cu);
        map.target_language = "en".into();
        map.matrix = DMatrix::from_row_slice(5, 5, &values);
        let mut text = Vec::new();
        map.write_text(&mut text).unwrap();
        let back = LinearMap::read_text(&text[..], "mem").unwrap();
        prop_assert_eq!(back, map);
    }
}
