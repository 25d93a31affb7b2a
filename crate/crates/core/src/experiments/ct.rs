use std::path::Path;

use rayon::prelude::*;

use super::config::{CtGeometry, ExperimentConfig, ExperimentKind};
use super::{fmt_f64, write_csv, write_run_record};
use crate::datasets::{build_ct_bundle, DatasetBundle};
use crate::error::{precondition, Error, Result};
use crate::linear_pair::{fit_empirical_latent_maps, EmpiricalBasis, PairModel};
use crate::metrics::mean_relative_error;
use crate::numerics::{self, Matrix, SvdResult};
use crate::operators::{materialize, LinearOperator, Radon};
use crate::pmat;

pub fn ct_operator(ct: &CtGeometry) -> Result<Radon> {
    Radon::new(ct.image_size, ct.n_angles, ct.n_detectors)
}

fn expect_kind(cfg: &ExperimentConfig, kinds: &[ExperimentKind]) -> Result<()> {
    cfg.validate()?;
    if !kinds.contains(&cfg.kind) {
        return Err(Error::Config(format!(
            "config kind {} cannot drive this command",
            cfg.kind.name()
        )));
    }
    Ok(())
}

fn bundle_for(cfg: &ExperimentConfig) -> Result<(DatasetBundle, Radon)> {
    let ct = cfg.ct.expect("validated");
    let op = ct_operator(&ct)?;
    let bundle = build_ct_bundle(
        ct.image_size,
        &op,
        &cfg.noise,
        cfg.counts.expect("validated"),
        cfg.seed,
        ct.jitter,
    )?;
    Ok((bundle, op))
}

/// Simulates a CT bundle and stores each partition as a PMAT file next to
/// `bundle.json`.
pub fn generate_ct(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetBundle> {
    expect_kind(cfg, &[ExperimentKind::GenCt, ExperimentKind::CtRankSweep])?;
    std::fs::create_dir_all(out)?;
    let (bundle, _) = bundle_for(cfg)?;
    let parts = [
        ("unpaired_b.pmat", &bundle.unpaired_b),
        ("unpaired_x.pmat", &bundle.unpaired_x),
        ("paired_x.pmat", &bundle.paired_x),
        ("paired_b.pmat", &bundle.paired_b),
        ("test_x.pmat", &bundle.test_x),
        ("test_b.pmat", &bundle.test_b),
    ];
    for (name, m) in parts {
        pmat::write(out.join(name), m)?;
    }
    std::fs::write(
        out.join("bundle.json"),
        serde_json::to_string_pretty(&bundle.provenance)? + "\n",
    )?;
    let mut outputs: Vec<&str> = parts.iter().map(|(n, _)| *n).collect();
    outputs.push("bundle.json");
    write_run_record(out, "gen-ct", cfg, &outputs)?;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepRow {
    pub rank: usize,
    pub r_x: usize,
    pub r_b: usize,
    pub ae_x_rel: f64,
    pub ae_b_rel: f64,
    pub pair_forward_rel: f64,
    pub pair_inverse_rel: f64,
    pub tsvd_forward_rel: f64,
    pub tsvd_inverse_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepReport {
    pub rows: Vec<RankSweepRow>,
    /// Requested ranks that were not evaluated, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Mean test errors of the rank-`r` truncated SVD of `A`:
/// `||A_r x - b|| / ||b||` and `||A_r^+ b - x|| / ||x||`.
pub fn tsvd_errors(
    a_svd: &SvdResult,
    r: usize,
    test_x: &Matrix,
    test_b: &Matrix,
) -> Result<(f64, f64)> {
    let t = numerics::truncate(a_svd, r)?;
    let vt_x = t.v.transpose() * test_x;
    let forward = &t.u * Matrix::from_diagonal(&t.sigma) * vt_x;
    let inv_sigma = t.sigma.map(|s| 1.0 / s);
    let ut_b = t.u.transpose() * test_b;
    let inverse = &t.v * Matrix::from_diagonal(&inv_sigma) * ut_b;
    Ok((
        mean_relative_error(&forward, test_b)?,
        mean_relative_error(&inverse, test_x)?,
    ))
}

/// Sweeps `r_x = r_b = r` over `ranks` on an existing bundle and forward
/// matrix. Ranks are clipped at each space's size limit; ranks beyond the
/// numerical rank of either training set are skipped.
pub fn rank_sweep_on_bundle(
    bundle: &DatasetBundle,
    a: &Matrix,
    ranks: &[usize],
) -> Result<RankSweepReport> {
    let (basis_x, basis_b) = rayon::join(
        || EmpiricalBasis::new(&bundle.unpaired_x),
        || EmpiricalBasis::new(&bundle.unpaired_b),
    );
    let (basis_x, basis_b) = (basis_x?, basis_b?);
    let a_svd = numerics::svd(a)?;
    let a_rank = numerics::numerical_rank(&a_svd.sigma, a.nrows(), a.ncols(), None);
    let cap_x = bundle.unpaired_x.nrows().min(bundle.unpaired_x.ncols());
    let cap_b = bundle.unpaired_b.nrows().min(bundle.unpaired_b.ncols());
    let (max_x, max_b) = (basis_x.max_rank(), basis_b.max_rank());

    let results: Vec<std::result::Result<RankSweepRow, (usize, String)>> = ranks
        .par_iter()
        .map(|&rank| {
            let (r_x, r_b) = (rank.min(cap_x), rank.min(cap_b));
            if r_x > max_x || r_b > max_b {
                return Err((
                    rank,
                    format!(
                        "data rank too small (x: {max_x}, b: {max_b}) for r_x={r_x}, r_b={r_b}"
                    ),
                ));
            }
            let row = || -> Result<RankSweepRow> {
                let ae_x = basis_x.autoencoder(r_x, None)?;
                let ae_b = basis_b.autoencoder(r_b, None)?;
                let maps = fit_empirical_latent_maps(
                    &ae_x.encode_all(&bundle.paired_x)?,
                    &ae_b.encode_all(&bundle.paired_b)?,
                )?;
                let model = PairModel::new(ae_x, ae_b, maps)?;
                let zx = model.ae_x.encode_all(&bundle.test_x)?;
                let zb = model.ae_b.encode_all(&bundle.test_b)?;
                let x_rec = &model.ae_x.decoder * &zx;
                let b_rec = &model.ae_b.decoder * &zb;
                let b_pred = &model.ae_b.decoder * (&model.maps.forward * &zx);
                let x_pred = &model.ae_x.decoder * (&model.maps.inverse * &zb);
                let (tsvd_forward_rel, tsvd_inverse_rel) =
                    tsvd_errors(&a_svd, rank.min(a_rank), &bundle.test_x, &bundle.test_b)?;
                Ok(RankSweepRow {
                    rank,
                    r_x,
                    r_b,
                    ae_x_rel: mean_relative_error(&x_rec, &bundle.test_x)?,
                    ae_b_rel: mean_relative_error(&b_rec, &bundle.test_b)?,
                    pair_forward_rel: mean_relative_error(&b_pred, &bundle.test_b)?,
                    pair_inverse_rel: mean_relative_error(&x_pred, &bundle.test_x)?,
                    tsvd_forward_rel,
                    tsvd_inverse_rel,
                })
            };
            row().map_err(|e| (rank, e.to_string()))
        })
        .collect();

    let mut report = RankSweepReport {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err((rank, reason)) => {
                log::warn!("rank {rank} skipped: {reason}");
                report.skipped.push((rank, reason));
            }
        }
    }
    Ok(report)
}

pub const RANK_SWEEP_HEADER: [&str; 9] = [
    "rank",
    "ae_x_rel",
    "ae_b_rel",
    "pair_forward_rel",
    "pair_inverse_rel",
    "tsvd_forward_rel",
    "tsvd_inverse_rel",
    "r_x",
    "r_b",
];

/// Builds the configured CT bundle and writes `rank_sweep.csv`.
pub fn run_rank_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RankSweepReport> {
    expect_kind(cfg, &[ExperimentKind::CtRankSweep])?;
    std::fs::create_dir_all(out)?;
    let (bundle, op) = bundle_for(cfg)?;
    let a = materialize(&op as &dyn LinearOperator)?;
    let report = rank_sweep_on_bundle(&bundle, &a, &cfg.ranks)?;
    if report.rows.is_empty() {
        return precondition("every requested rank was skipped");
    }
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.rank.to_string(),
                fmt_f64(r.ae_x_rel),
                fmt_f64(r.ae_b_rel),
                fmt_f64(r.pair_forward_rel),
                fmt_f64(r.pair_inverse_rel),
                fmt_f64(r.tsvd_forward_rel),
                fmt_f64(r.tsvd_inverse_rel),
                r.r_x.to_string(),
                r.r_b.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("rank_sweep.csv"), &RANK_SWEEP_HEADER, &rows)?;
    write_run_record(out, "rank-sweep", cfg, &["rank_sweep.csv"])?;
    Ok(report)
}

/// Fits the empirical linear PAIR model at `r_x = r_b = rank` on the
/// configured bundle, clipping the rank to the data as the sweep does.
pub fn fit_ct_pair(cfg: &ExperimentConfig, rank: usize) -> Result<PairModel> {
    expect_kind(cfg, &[ExperimentKind::GenCt, ExperimentKind::CtRankSweep])?;
    let (bundle, _) = bundle_for(cfg)?;
    let r_x = rank
        .min(bundle.unpaired_x.nrows())
        .min(bundle.unpaired_x.ncols());
    let r_b = rank
        .min(bundle.unpaired_b.nrows())
        .min(bundle.unpaired_b.ncols());
    PairModel::fit_empirical(
        &bundle.unpaired_x,
        &bundle.unpaired_b,
        &bundle.paired_x,
        &bundle.paired_b,
        r_x,
        r_b,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BundleCounts;
    use crate::numerics::Vector;
    use crate::operators::NoiseSpec;
    use crate::seeding::derived_rng;
    use rand::Rng;

    fn orthonormal(n: usize, k: usize, seed: u64) -> Matrix {
        let mut rng = derived_rng(seed, "ortho", 0);
        Matrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0))
            .qr()
            .q()
    }

    #[test]
    fn tsvd_matches_a_known_factorization() {
        // A = Q1 diag(s) Q2^T with prescribed, well separated singular values
        let s = [5.0, 3.0, 2.0, 1.0, 0.5, 0.1];
        let (q1, q2) = (orthonormal(9, 6, 1), orthonormal(7, 6, 2));
        let a = &q1 * Matrix::from_diagonal(&Vector::from_column_slice(&s)) * q2.transpose();
        let x = orthonormal(7, 3, 3) + Matrix::from_element(7, 3, 0.2);
        let b = &a * &x + orthonormal(9, 3, 4) * 0.01;
        let r = 3;
        let head = |q: &Matrix| q.columns(0, r).into_owned();
        let sr = Matrix::from_diagonal(&Vector::from_column_slice(&s[..r]));
        let a_r = head(&q1) * &sr * head(&q2).transpose();
        let a_r_pinv = head(&q2) * sr.try_inverse().unwrap() * head(&q1).transpose();
        let forward = mean_relative_error(&(&a_r * &x), &b).unwrap();
        let inverse = mean_relative_error(&(&a_r_pinv * &b), &x).unwrap();
        let (f, i) = tsvd_errors(&numerics::svd(&a).unwrap(), r, &x, &b).unwrap();
        assert!(
            (f - forward).abs() < 1e-12 && (i - inverse).abs() < 1e-12,
            "{f} {forward} {i} {inverse}"
        );
    }

    fn tiny_bundle() -> (DatasetBundle, Matrix) {
        let op = Radon::new(16, 6, 23).unwrap();
        let counts = BundleCounts {
            unpaired_b: 60,
            unpaired_x: 50,
            paired: 50,
            test: 10,
        };
        let bundle = build_ct_bundle(16, &op, &NoiseSpec::relative(0.05), counts, 9, 0.1).unwrap();
        (bundle, materialize(&op as &dyn LinearOperator).unwrap())
    }

    #[test]
    fn sweep_reports_each_rank_in_order() {
        let (bundle, a) = tiny_bundle();
        let report = rank_sweep_on_bundle(&bundle, &a, &[5, 10, 20]).unwrap();
        let ranks: Vec<usize> = report.rows.iter().map(|r| r.rank).collect();
        assert_eq!(ranks, vec![5, 10, 20]);
        assert!(report.skipped.is_empty());
        for w in report.rows.windows(2) {
            assert!(w[1].ae_x_rel <= w[0].ae_x_rel + 1e-12);
            assert!(w[1].ae_b_rel <= w[0].ae_b_rel + 1e-12);
        }
        let again = rank_sweep_on_bundle(&bundle, &a, &[5, 10, 20]).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn sweep_clips_and_skips() {
        let (bundle, a) = tiny_bundle();
        // 50 x-samples cap r_x at 50; 60 b-samples cap r_b at 60
        let report = rank_sweep_on_bundle(&bundle, &a, &[55, 500]).unwrap();
        let total = report.rows.len() + report.skipped.len();
        assert_eq!(total, 2);
        for row in &report.rows {
            assert_eq!(row.r_x, 50);
            assert!(row.r_b <= 60);
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let cfg = ExperimentConfig::from_value(serde_json::json!({
            "schema_version": 1,
            "kind": "gen_ct",
            "seed": 1,
            "ct": { "image_size": 16, "n_angles": 6, "n_detectors": 23 },
            "noise": { "mode": "relative_norm", "level": 0.05 },
            "counts": { "unpaired_b": 4, "unpaired_x": 4, "paired": 4, "test": 2 }
        }))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_rank_sweep(&cfg, dir.path()),
            Err(Error::Config(_))
        ));
    }
}
