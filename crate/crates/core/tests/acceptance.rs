//! Acceptance criteria 1-10. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use uqx_core::ensemble::{aggregate, lsu_all, EnsemblePrediction};
use uqx_core::explainer::{fit_elastic_net, weighted_mae, weighted_r2};
use uqx_core::features::SURFACE_TO_VOLUME_FEATURE;
use uqx_core::metrics::{detection_scores, dice, iou_adj_all, match_lesions, ndsc, NDSC_REFERENCE_FRACTION};
use uqx_core::novelty::{mahalanobis, ppca_fit, ppca_project_rows, smallest_distance, LatentBank, COVARIANCE_JITTER};
use uqx_core::pipeline::{run_pipeline, DatasetRoles, Role, RunConfig};
use uqx_core::synth::{generate_cohort, CohortSpec};
use uqx_core::tabular::{knn_impute, FeatureTable, RowId};
use uqx_core::volume::{connected_components, BinaryMask, Connectivity, Grid, Volume};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

/// 26-connected components by flood fill, as voxel sets.
fn components(data: &[bool], dims: [usize; 3]) -> Vec<BTreeSet<usize>> {
    let [nx, ny, nz] = dims;
    let mut seen = vec![false; data.len()];
    let mut out = Vec::new();
    for start in 0..data.len() {
        if !data[start] || seen[start] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.insert(i);
            let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let j = a as usize + nx * (b as usize + ny * c as usize);
                        if data[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn label_sets(labels: &uqx_core::volume::LabelMap) -> BTreeMap<u32, BTreeSet<usize>> {
    let mut m: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l > 0 {
            m.entry(l).or_default().insert(i);
        }
    }
    m
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

// ---------------------------------------------------------------- 1

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<bool>, Vec<bool>) {
    let p: f64 = rng.random_range(0.01..0.3);
    let gt: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
    let pred = if rng.random_bool(0.5) {
        (0..n).map(|_| rng.random::<f64>() < p).collect()
    } else {
        let flip: f64 = rng.random_range(0.0..0.2);
        gt.iter().map(|&g| if rng.random::<f64>() < flip { !g } else { g }).collect()
    };
    (pred, gt)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let dims = [8, 8, 8];
    let grid = Grid::isotropic(dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut lesions = 0usize;
    for trial in 0..1000 {
        let (p, g) = random_pair(&mut rng, grid.len());
        let pred = BinaryMask::new(grid, p.clone()).unwrap();
        let gt = BinaryMask::new(grid, g.clone()).unwrap();
        let tp = p.iter().zip(&g).filter(|(a, b)| **a && **b).count();
        let fp = p.iter().zip(&g).filter(|(a, b)| **a && !**b).count();
        let fn_ = p.iter().zip(&g).filter(|(a, b)| !**a && **b).count();
        let d = dice(&pred, &gt).unwrap();
        check(d == ratio(2 * tp, 2 * tp + fp + fn_), || format!("trial {trial}: dice {d}"))?;

        let pos = g.iter().filter(|&&v| v).count();
        match ndsc(&pred, &gt, NDSC_REFERENCE_FRACTION) {
            Ok(v) => {
                let h = pos as f64 / (g.len() - pos) as f64;
                let kappa = h * (1.0 / NDSC_REFERENCE_FRACTION - 1.0);
                let den = 2.0 * tp as f64 + kappa * fp as f64 + fn_ as f64;
                let want = if den == 0.0 { 1.0 } else { 2.0 * tp as f64 / den };
                check(v == want, || format!("trial {trial}: ndsc {v} vs {want}"))?;
            }
            Err(_) => check(pos == 0 || pos == g.len(), || format!("trial {trial}: ndsc failed"))?,
        }

        let pl = connected_components(&pred, Connectivity::TwentySix);
        let gl = connected_components(&gt, Connectivity::TwentySix);
        let pc = components(&p, dims);
        let gc = components(&g, dims);
        let psets = label_sets(&pl);
        let gsets = label_sets(&gl);
        check(
            psets.values().cloned().collect::<BTreeSet<_>>() == pc.iter().cloned().collect::<BTreeSet<_>>(),
            || format!("trial {trial}: prediction components differ"),
        )?;
        check(
            gsets.values().cloned().collect::<BTreeSet<_>>() == gc.iter().cloned().collect::<BTreeSet<_>>(),
            || format!("trial {trial}: ground-truth components differ"),
        )?;

        let m = match_lesions(&pl, &gl).unwrap();
        let gt_union: BTreeSet<usize> = gc.iter().flatten().copied().collect();
        let pred_union: BTreeSet<usize> = pc.iter().flatten().copied().collect();
        let tp_o: BTreeSet<&BTreeSet<usize>> = pc.iter().filter(|c| !c.is_disjoint(&gt_union)).collect();
        let fp_o: BTreeSet<&BTreeSet<usize>> = pc.iter().filter(|c| c.is_disjoint(&gt_union)).collect();
        let fn_o: BTreeSet<&BTreeSet<usize>> = gc.iter().filter(|c| c.is_disjoint(&pred_union)).collect();
        let to_sets = |labels: &BTreeSet<u32>, sets: &BTreeMap<u32, BTreeSet<usize>>| -> BTreeSet<BTreeSet<usize>> {
            labels.iter().map(|l| sets[l].clone()).collect()
        };
        let owned = |s: BTreeSet<&BTreeSet<usize>>| s.into_iter().cloned().collect::<BTreeSet<_>>();
        check(to_sets(&m.tp_pred_labels, &psets) == owned(tp_o.clone()), || format!("trial {trial}: tp set"))?;
        check(to_sets(&m.fp_pred_labels, &psets) == owned(fp_o.clone()), || format!("trial {trial}: fp set"))?;
        check(to_sets(&m.fn_gt_labels, &gsets) == owned(fn_o.clone()), || format!("trial {trial}: fn set"))?;
        for ((pl_, gl_), &count) in &m.overlap_table {
            let want = psets[pl_].intersection(&gsets[gl_]).count();
            check(count == want && want > 0, || format!("trial {trial}: overlap table"))?;
        }
        let pairs = pc.iter().flat_map(|a| gc.iter().filter(move |b| !a.is_disjoint(b))).count();
        check(m.overlap_table.len() == pairs, || format!("trial {trial}: overlap table size"))?;

        let det = detection_scores(&m);
        let (tpl, fpl, fnl) = (tp_o.len(), fp_o.len(), fn_o.len());
        check(
            det.lf1 == ratio(2 * tpl, 2 * tpl + fpl + fnl)
                && det.lppv == ratio(tpl, tpl + fpl)
                && det.ltpr == ratio(tpl, tpl + fnl),
            || format!("trial {trial}: detection scores"),
        )?;

        let adj = iou_adj_all(&pl, &gl).unwrap();
        for (label, k) in &psets {
            lesions += 1;
            let kp: BTreeSet<usize> = gc.iter().filter(|c| !c.is_disjoint(k)).flatten().copied().collect();
            let q: BTreeSet<usize> = pc.iter().filter(|c| !c.is_disjoint(&kp)).flatten().copied().collect();
            let inter = k.intersection(&kp).count();
            let want = if kp.is_empty() {
                0.0
            } else {
                let kp_minus_q: BTreeSet<usize> = kp.difference(&q).copied().collect();
                inter as f64 / k.union(&kp_minus_q).count() as f64
            };
            let plain = if kp.is_empty() { 0.0 } else { inter as f64 / k.union(&kp).count() as f64 };
            let got = adj[label];
            check(got == want, || format!("trial {trial}: iou_adj {got} vs {want}"))?;
            check(got >= plain, || format!("trial {trial}: iou_adj {got} < IoU {plain}"))?;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("runtime {secs:.1}s exceeds 10s"))?;
    Ok(format!("1000 pairs, {lesions} predicted lesions, exact; {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let dims = [7, 7, 7];
    let grid = Grid::isotropic(dims).unwrap();
    let tau = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut lesions, mut zeros) = (0usize, 0usize);
    for trial in 0..1000 {
        // Multiples of 1/64 keep every member mean exact.
        let q = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.random_range(lo..hi) as f64 / 64.0;
        let shared = trial % 3 == 0;
        let base: Vec<bool> = (0..grid.len()).map(|_| rng.random::<f64>() < 0.15).collect();
        let members: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..grid.len())
                    .map(|i| {
                        if shared {
                            if base[i] { q(&mut rng, 32, 65) } else { q(&mut rng, 0, 32) }
                        } else if rng.random::<f64>() < 0.25 {
                            q(&mut rng, 24, 65)
                        } else {
                            q(&mut rng, 0, 32)
                        }
                    })
                    .collect()
            })
            .collect();
        let ens = EnsemblePrediction::new(members.iter().map(|m| Volume::new(grid, m.clone()).unwrap()).collect())
            .unwrap();
        let agg = aggregate(&ens, tau).unwrap();
        let scores = lsu_all(&agg, &ens).unwrap();
        let member_comps: Vec<Vec<BTreeSet<usize>>> = members
            .iter()
            .map(|m| components(&m.iter().map(|&v| v >= tau).collect::<Vec<_>>(), dims))
            .collect();
        for (label, l) in label_sets(&agg.labels) {
            lesions += 1;
            let (_, got) = scores[&label];
            check((0.0..=1.0).contains(&got), || format!("trial {trial}: LSU {got} outside [0,1]"))?;
            let mut all_equal = true;
            let mut iou_sum = 0.0;
            for comps in &member_comps {
                let lk: BTreeSet<usize> = comps.iter().filter(|c| !c.is_disjoint(&l)).flatten().copied().collect();
                all_equal &= lk == l;
                let inter = lk.intersection(&l).count();
                iou_sum += if inter == 0 { 0.0 } else { inter as f64 / lk.union(&l).count() as f64 };
            }
            let want = 1.0 - iou_sum / 5.0;
            check((got - want).abs() < 1e-12, || format!("trial {trial}: LSU {got} vs oracle {want}"))?;
            check((got == 0.0) == all_equal, || format!("trial {trial}: LSU {got} but members equal = {all_equal}"))?;
            zeros += usize::from(all_equal);
        }
    }
    check(zeros > 0 && zeros < lesions, || "trials never exercised both LSU branches".into())?;

    let g = Grid::isotropic([6, 1, 1]).unwrap();
    let l = vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let other = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
    let ens = EnsemblePrediction::new(vec![Volume::new(g, l.clone()).unwrap(), Volume::new(g, other).unwrap()]).unwrap();
    let agg = aggregate(&ens, 0.5).unwrap();
    let v = lsu_all(&agg, &ens).unwrap();
    let half = v.values().find(|(n, _)| *n == 3).map(|x| x.1).ok_or("half-agreement lesion missing")?;
    check((half - 0.5).abs() < 1e-12, || format!("half-agreement LSU {half}"))?;
    Ok(format!("1000 ensembles, {lesions} lesions ({zeros} unanimous); half-agreement {half}"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let grid = Grid::isotropic([100, 100, 100]).unwrap();
    let gt = BinaryMask::from_indices(grid, 0..10);
    let pred = BinaryMask::from_indices(grid, 0..20);
    let v = ndsc(&pred, &gt, NDSC_REFERENCE_FRACTION).map_err(|e| e.to_string())?;
    check((v - 0.8).abs() < 1e-3, || format!("worked example gives {v}"))?;

    let g = Grid::isotropic([6, 6, 6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let gtv: Vec<bool> = (0..g.len()).map(|_| rng.random::<f64>() < 0.3).collect();
        if gtv.iter().all(|&b| !b) || gtv.iter().all(|&b| b) {
            continue;
        }
        let predv: Vec<bool> = gtv.iter().map(|&b| b && rng.random::<f64>() < 0.7).collect();
        let gt = BinaryMask::new(g, gtv).unwrap();
        let pred = BinaryMask::new(g, predv).unwrap();
        let diff = (ndsc(&pred, &gt, NDSC_REFERENCE_FRACTION).unwrap() - dice(&pred, &gt).unwrap()).abs();
        worst = worst.max(diff);
    }
    check(worst <= 1e-12, || format!("FP = 0 deviates from dice by {worst}"))?;
    Ok(format!("worked example {v:.6}; FP=0 max |nDSC - DSC| = {worst:e}"))
}

// ---------------------------------------------------------------- 4

fn objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], b0: f64, beta: &[f64], alpha: f64, rho: f64) -> f64 {
    let n = y.len();
    let mut loss = 0.0;
    for i in 0..n {
        let r = y[i] - b0 - (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum::<f64>();
        loss += w[i] * r * r;
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    loss / (2.0 * n as f64) + alpha * (rho * l1 + 0.5 * (1.0 - rho) * l2)
}

/// Accelerated proximal gradient on (intercept, β) with adaptive restart.
fn fista(x: &DMatrix<f64>, y: &[f64], w: &[f64], alpha: f64, rho: f64) -> Vec<f64> {
    let (n, d) = x.shape();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let wm = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let h = a.transpose() * &wm * &a / n as f64;
    let lip = SymmetricEigen::new(h.clone()).eigenvalues.max() + alpha * (1.0 - rho);
    let aty = a.transpose() * &wm * DVector::from_column_slice(y) / n as f64;
    let grad = |t: &DVector<f64>| {
        let mut g = &h * t - &aty;
        for j in 1..=d {
            g[j] += alpha * (1.0 - rho) * t[j];
        }
        g
    };
    let prox = |v: DVector<f64>| {
        let thr = alpha * rho / lip;
        DVector::from_fn(d + 1, |j, _| {
            if j == 0 {
                v[0]
            } else {
                v[j].signum() * (v[j].abs() - thr).max(0.0)
            }
        })
    };
    let mut theta = DVector::zeros(d + 1);
    let mut z = theta.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let next = prox(&z - grad(&z) / lip);
        let step = (&next - &theta).amax();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        // restart momentum when it points uphill
        if (&z - &next).dot(&(&next - &theta)) > 0.0 {
            t = 1.0;
            z = next.clone();
        } else {
            z = &next + (&next - &theta) * ((t - 1.0) / t_next);
            t = t_next;
        }
        theta = next;
        if step < 1e-15 {
            break;
        }
    }
    theta.iter().copied().collect()
}

fn criterion_4() -> Outcome {
    let (n, d) = (50, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_kkt, mut worst_obj, mut worst_ols) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth: Vec<f64> = (0..d).map(|j| if j % 2 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.3 + (0..d).map(|j| x[(i, j)] * truth[j]).sum::<f64>() + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.1)).collect();
        let mw = raw.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = raw.iter().map(|v| v / mw).collect();
        let alpha = 10f64.powf(rng.random_range(-3.0..0.0));
        let rho: f64 = match trial % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };

        let m = fit_elastic_net(&x, &y, &w, alpha, rho, 1e-12).map_err(|e| e.to_string())?;
        let r: Vec<f64> = (0..n)
            .map(|i| y[i] - m.intercept - (0..d).map(|j| x[(i, j)] * m.coefs[j]).sum::<f64>())
            .collect();
        let mut kkt = ((0..n).map(|i| w[i] * r[i]).sum::<f64>() / n as f64).abs();
        for j in 0..d {
            let g = -(0..n).map(|i| w[i] * x[(i, j)] * r[i]).sum::<f64>() / n as f64 + alpha * (1.0 - rho) * m.coefs[j];
            let res = if m.coefs[j] != 0.0 {
                (g + alpha * rho * m.coefs[j].signum()).abs()
            } else {
                (g.abs() - alpha * rho).max(0.0)
            };
            kkt = kkt.max(res);
        }
        worst_kkt = worst_kkt.max(kkt);

        let oracle = fista(&x, &y, &w, alpha, rho);
        let f_lib = objective(&x, &y, &w, m.intercept, &m.coefs, alpha, rho);
        let f_orc = objective(&x, &y, &w, oracle[0], &oracle[1..], alpha, rho);
        worst_obj = worst_obj.max((f_lib - f_orc).abs());

        let z = fit_elastic_net(&x, &y, &w, 1e-10, rho, 1e-14).map_err(|e| e.to_string())?;
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let wm = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
        let ols = (a.transpose() * &wm * &a)
            .lu()
            .solve(&(a.transpose() * &wm * DVector::from_column_slice(&y)))
            .ok_or("singular weighted normal equations")?;
        let mut lib = vec![z.intercept];
        lib.extend_from_slice(&z.coefs);
        let diff: f64 = lib.iter().zip(ols.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_ols = worst_ols.max(diff / ols.norm());
    }
    check(worst_kkt < 1e-6, || format!("KKT residual {worst_kkt:e}"))?;
    check(worst_obj < 1e-8, || format!("objective gap {worst_obj:e}"))?;
    check(worst_ols < 1e-6, || format!("OLS limit relative error {worst_ols:e}"))?;
    Ok(format!("max KKT {worst_kkt:.1e}, max objective gap {worst_obj:.1e}, OLS limit rel {worst_ols:.1e}"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(5..200);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let yhat: Vec<f64> = y.iter().map(|v| v + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
        let mean_w = raw.iter().sum::<f64>() / n as f64;
        let w: Vec<f64> = raw.iter().map(|v| v / mean_w).collect();

        let sw: f64 = raw.iter().sum();
        let ybar = raw.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
        let ss_res: f64 = (0..n).map(|i| raw[i] * (y[i] - yhat[i]).powi(2)).sum();
        let ss_tot: f64 = (0..n).map(|i| raw[i] * (y[i] - ybar).powi(2)).sum();
        let r2_o = 1.0 - ss_res / ss_tot;
        let mae_o = (0..n).map(|i| raw[i] * (y[i] - yhat[i]).abs()).sum::<f64>() / sw;

        let r2 = weighted_r2(&y, &yhat, &w).map_err(|e| e.to_string())?;
        let mae = weighted_mae(&y, &yhat, &w).map_err(|e| e.to_string())?;
        worst = worst.max((r2 - r2_o).abs()).max((mae - mae_o).abs());

        let perfect = weighted_r2(&y, &y, &w).unwrap();
        check(perfect == 1.0, || format!("perfect fit gives {perfect}"))?;
        let flat = vec![ybar; n];
        let zero = weighted_r2(&y, &flat, &w).unwrap();
        check(zero.abs() < 1e-12, || format!("weighted-mean predictor gives {zero}"))?;
    }
    check(worst < 1e-10, || format!("deviation {worst:e}"))?;
    Ok(format!("100 vectors, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let (n, d, q, sigma2) = (10_000, 8, 2, 0.09f64);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w = DMatrix::from_fn(d, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mu = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let row = &w * z + &mu;
        for j in 0..d {
            x[(i, j)] = row[j] + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let model = ppca_fit(&x, q).map_err(|e| e.to_string())?;
    let rel = (model.noise_variance - sigma2).abs() / sigma2;
    check(rel < 0.05, || format!("noise variance {} vs {sigma2}", model.noise_variance))?;

    let latents = ppca_project_rows(&model, &x.rows(0, 500).into_owned()).map_err(|e| e.to_string())?;
    let bank = LatentBank::fit(latents.clone()).map_err(|e| e.to_string())?;
    let m = latents.nrows();
    let mean = DVector::from_fn(q, |j, _| latents.column(j).sum() / m as f64);
    let mut cov = DMatrix::zeros(q, q);
    for r in 0..m {
        let dv = latents.row(r).transpose() - &mean;
        cov += &dv * dv.transpose();
    }
    cov /= (m - 1) as f64;
    for k in 0..q {
        cov[(k, k)] += COVARIANCE_JITTER;
    }
    let inv = cov.try_inverse().ok_or("covariance not invertible")?;
    let mut worst_m = 0.0f64;
    let queries = ppca_project_rows(&model, &x.rows(500, 200).into_owned()).map_err(|e| e.to_string())?;
    let all = DMatrix::from_fn(400, q, |r, c| if r < 200 { queries[(r, c)] } else { latents[(r - 200, c)] });
    for r in 0..all.nrows() {
        let z = all.row(r).transpose();
        let dv = &z - &mean;
        let want = (dv.transpose() * &inv * &dv)[(0, 0)].sqrt();
        let got = mahalanobis(&bank, &z).map_err(|e| e.to_string())?;
        worst_m = worst_m.max((got - want).abs());

        let mut best = f64::INFINITY;
        for b in 0..m {
            let dist = (0..q).map(|c| (latents[(b, c)] - z[c]).powi(2)).sum::<f64>().sqrt();
            if dist > 0.0 && dist < best {
                best = dist;
            }
        }
        let sd = smallest_distance(&bank, &z).map_err(|e| e.to_string())?;
        check(sd == best, || format!("smallest distance {sd} vs scan {best}"))?;
    }
    check(worst_m < 1e-8, || format!("Mahalanobis deviation {worst_m:e}"))?;
    Ok(format!("sigma2 {:.5} (rel err {:.2}%), Mahalanobis max dev {worst_m:.1e}, 400 exact scans", model.noise_variance, 100.0 * rel))
}

// ---------------------------------------------------------------- 7

fn brute_impute(cells: &[Vec<Option<f64>>], k: usize) -> Vec<Vec<f64>> {
    let (n, d) = (cells.len(), cells[0].len());
    let col_mean: Vec<f64> = (0..d)
        .map(|j| {
            let obs: Vec<f64> = cells.iter().filter_map(|r| r[j]).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect();
    let mut out = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..d {
            if let Some(v) = cells[i][j] {
                out[i][j] = v;
                continue;
            }
            let mut cand = Vec::new();
            for r in 0..n {
                if r == i || cells[r][j].is_none() {
                    continue;
                }
                let shared: Vec<usize> = (0..d).filter(|&c| cells[i][c].is_some() && cells[r][c].is_some()).collect();
                if shared.is_empty() {
                    continue;
                }
                let mut s = 0.0;
                for &c in &shared {
                    let diff = cells[i][c].unwrap() - cells[r][c].unwrap();
                    s += diff * diff;
                }
                cand.push(((d as f64 / shared.len() as f64 * s).sqrt(), r));
            }
            out[i][j] = if cand.is_empty() {
                col_mean[j]
            } else {
                cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let take = &cand[..k.min(cand.len())];
                take.iter().map(|&(_, r)| cells[r][j].unwrap()).sum::<f64>() / take.len() as f64
            };
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut tables, mut filled) = (0, 0usize);
    while tables < 50 {
        let cells: Vec<Vec<Option<f64>>> = (0..20)
            .map(|_| {
                (0..10)
                    .map(|_| {
                        let v = (rng.random_range(0..8) as f64) * 0.5;
                        (rng.random::<f64>() >= 0.1).then_some(v)
                    })
                    .collect()
            })
            .collect();
        if (0..10).any(|j| cells.iter().all(|r| r[j].is_none())) {
            continue;
        }
        tables += 1;
        filled += cells.iter().flatten().filter(|c| c.is_none()).count();
        let rows = (0..20)
            .map(|i| RowId { dataset_id: "d".into(), subject_id: "s".into(), lesion_id: i + 1 })
            .collect();
        let t = FeatureTable::new(rows, (0..10).map(|j| format!("f{j}")).collect(), cells.clone(), vec![0.5; 20]).unwrap();
        let got = knn_impute(&t, 5).map_err(|e| e.to_string())?;
        let want = brute_impute(&cells, 5);
        for i in 0..20 {
            for j in 0..10 {
                let g = got.cell(i, j).ok_or("cell left missing")?;
                check(g == want[i][j], || format!("table {tables}, cell ({i},{j}): {g} vs {}", want[i][j]))?;
            }
        }
    }
    Ok(format!("50 tables, {filled} imputed cells, all exact"))
}

// ---------------------------------------------------------------- 8

fn roles_under(root: &Path, n_subjects: usize, seed: u64) -> DatasetRoles {
    let mut roles = DatasetRoles::default();
    for spec in CohortSpec::role_presets(n_subjects, seed) {
        let dir = root.join(&spec.dataset_id);
        generate_cohort(&spec, &dir).expect("cohort generation");
        match spec.dataset_id.as_str() {
            "train" => roles.train = Some(dir),
            "test_in" => roles.test_in = Some(dir),
            _ => roles.test_out = Some(dir),
        }
    }
    roles
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
    }
    out
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let roles = roles_under(&tmp.path().join("cohort"), 4, 42);
    let mut reference: Option<BTreeMap<String, Vec<u8>>> = None;
    let settings: [(&str, Option<usize>); 4] = [("default", None), ("default again", None), ("1 thread", Some(1)), ("3 threads", Some(3))];
    for (k, (name, threads)) in settings.iter().enumerate() {
        let mut cfg = RunConfig::new(roles.clone(), tmp.path().join(format!("run{k}")));
        cfg.seeds = vec![0, 1, 2];
        cfg.threads = *threads;
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let files = artifacts(&cfg.output_dir);
        for role in Role::ALL {
            for f in [format!("features_{role}.csv"), format!("importance_{role}.json")] {
                check(files.contains_key(&f), || format!("{name}: {f} missing"))?;
            }
        }
        match &reference {
            None => reference = Some(files),
            Some(r) => {
                for (f, bytes) in r {
                    check(files.get(f) == Some(bytes), || format!("{name}: {f} differs"))?;
                }
            }
        }
    }
    let n = reference.map(|r| r.len()).unwrap_or(0);
    Ok(format!("{n} artifacts byte-identical over 2 runs and 1/3/default threads"))
}

// ---------------------------------------------------------------- 9 and 10

struct PlantedRun {
    secs: f64,
    out: uqx_core::pipeline::PipelineOutput,
}

fn planted_run() -> Result<PlantedRun, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let roles = roles_under(&tmp.path().join("cohort"), 15, 42);
    let cfg = RunConfig::new(roles, tmp.path().join("out"));
    let out = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    Ok(PlantedRun { secs: t0.elapsed().as_secs_f64(), out })
}

fn criterion_9(run: &PlantedRun) -> Outcome {
    for r in &run.out.roles {
        check(r.n_lesions >= 100, || format!("{} has only {} lesions", r.role, r.n_lesions))?;
    }
    let report = &run.out.importance[&Role::Train];
    let j = report
        .importances
        .iter()
        .position(|f| f.feature == SURFACE_TO_VOLUME_FEATURE)
        .ok_or("surface-to-volume column did not survive preprocessing")?;
    let rank = report.ranking().iter().position(|&k| k == j).unwrap() + 1;
    let positive = run.out.runs[&Role::Train].iter().filter(|r| r.model.importances()[j] > 0.0).count();
    let r2 = report.quality.r2_mean;
    check(rank <= 3, || format!("surface-to-volume ranked {rank}"))?;
    check(positive >= 9, || format!("positive in only {positive}/10 seeds"))?;
    check(r2 >= 0.3, || format!("cross-validated R2 {r2:.3}"))?;
    check(run.secs < 300.0, || format!("runtime {:.0}s", run.secs))?;
    Ok(format!(
        "rank {rank}, mean coef {:+.4}, positive {positive}/10, cv R2 {r2:.3}, {:.0}s",
        report.importances[j].mean, run.secs
    ))
}

fn criterion_10(run: &PlantedRun) -> Outcome {
    let m = run.out.transfer.as_ref().ok_or("no transfer matrix")?;
    let inside = m.cell(Role::Train, Role::TestIn).ok_or("train -> test_in missing")?;
    let shifted = m.cell(Role::Train, Role::TestOut).ok_or("train -> test_out missing")?;
    let lower = inside.r2.iter().zip(&shifted.r2).filter(|(a, b)| b < a).count();
    check(lower >= 9, || format!("shifted R2 lower in only {lower}/10 seeds"))?;
    Ok(format!(
        "shifted lower in {lower}/10 seeds (R2 {:.3} in-domain vs {:.3} shifted)",
        inside.r2_mean, shifted.r2_mean
    ))
}

// ---------------------------------------------------------------- driver

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    match &res {
        Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
        Err(why) => println!("criterion {n:>2} FAIL  {name}: {why} [{secs:.1}s]"),
    }
    res.is_ok()
}

fn main() {
    // `cargo test -- --list` and filters have nothing to enumerate here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run(1, "metric oracles", criterion_1);
    ok &= run(2, "LSU contract", criterion_2);
    ok &= run(3, "nDSC", criterion_3);
    ok &= run(4, "elastic-net optimality", criterion_4);
    ok &= run(5, "weighted scores", criterion_5);
    ok &= run(6, "PPCA and novelty", criterion_6);
    ok &= run(7, "kNN imputation", criterion_7);
    ok &= run(8, "determinism", criterion_8);
    let planted = catch_unwind(planted_run).unwrap_or_else(|_| Err("planted run panicked".into()));
    match planted {
        Ok(p) => {
            ok &= run(9, "planted-signal recovery", || criterion_9(&p));
            ok &= run(10, "transfer degradation", || criterion_10(&p));
        }
        Err(e) => {
            println!("criterion  9 FAIL  planted-signal recovery: {e}");
            println!("criterion 10 FAIL  transfer degradation: {e}");
            ok = false;
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
