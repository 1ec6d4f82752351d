//! CSV plot data. All files are in long format with one row per local,
//! frequency and channel (or factor), so they load directly into any
//! plotting tool.

use std::path::Path;

use autotune_core::autotune::TuneConfig;
use autotune_core::controller::{ControllerStructure, FrozenController, GeneralizedController};
use autotune_core::frf::{FrfSet, LocalFrf};
use autotune_core::linalg::max_singular_value;
use autotune_core::shaping::{closed_loop_blocks, BLOCKS};
use autotune_core::stability::{controller_points, factorized_images};
use autotune_core::C64;

use crate::CliError;

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

fn deg(z: C64) -> f64 {
    z.arg().to_degrees()
}

fn freeze(structure: &ControllerStructure, params: &GeneralizedController, local: &LocalFrf, points: &[C64]) -> Result<FrozenController, CliError> {
    Ok(structure.freeze(&params.theta, &structure.point_for(local.point.values()), points)?)
}

fn header(np: usize, rest: &[&str]) -> Vec<String> {
    let mut h = vec!["local".to_string()];
    h.extend((0..np).map(|k| format!("p{k}")));
    h.extend(rest.iter().map(|s| s.to_string()));
    h
}

fn prefix(i: usize, local: &LocalFrf) -> Vec<String> {
    let mut r = vec![i.to_string()];
    r.extend(local.point.values().iter().map(|v| v.to_string()));
    r
}

/// `sensitivity.csv`, `nyquist.csv`, `bode_loop.csv` and `weights.csv`.
pub fn write_all(
    dir: &Path,
    frfs: &FrfSet,
    structure: &ControllerStructure,
    params: &GeneralizedController,
    cfg: &TuneConfig,
) -> Result<(), CliError> {
    let points = controller_points(&frfs.grid, frfs.sample_time);
    let omega = frfs.grid.values();
    let np = frfs.np;
    let open = |name: &str| -> Result<csv::Writer<std::fs::File>, CliError> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(csv::Writer::from_writer(file))
    };
    let mut sens = open("sensitivity.csv")?;
    let mut nyq = open("nyquist.csv")?;
    let mut bode = open("bode_loop.csv")?;
    let mut weights = open("weights.csv")?;
    sens.write_record(header(np, &["omega_rad_s", "channel", "s_db", "t_db", "sigma_max_s_db", "s_bound_db"]))?;
    nyq.write_record(header(np, &["omega_rad_s", "factor", "re", "im"]))?;
    bode.write_record(header(np, &["omega_rad_s", "channel", "loop_db", "loop_deg", "controller_db", "controller_deg"]))?;
    weights.write_record(header(np, &["omega_rad_s", "channel", "block", "bound_db"]))?;

    for (i, local) in frfs.locals.iter().enumerate() {
        let k = freeze(structure, params, local, &points)?;
        let set = cfg.weights.weights_for(local, &frfs.grid)?;
        let images = factorized_images(&local.response.data, &k, &frfs.grid).ok();
        let pre = prefix(i, local);
        for (t, p) in local.response.data.iter().enumerate() {
            let w = omega[t];
            let km = k.matrix(t);
            let blocks = closed_loop_blocks(p, &km);
            let l = p * &km;
            for j in 0..frfs.n_rb {
                let bound = 1.0 / set.blocks[0][j].eval(w)?;
                let (s, t_mag, sig) = match &blocks {
                    Some(b) => {
                        let s = b[0][(j, j)];
                        (db(s.norm()), db((C64::new(1.0, 0.0) - s).norm()), db(max_singular_value(&b[0])))
                    }
                    None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
                };
                let mut r = pre.clone();
                r.extend([w.to_string(), j.to_string(), s.to_string(), t_mag.to_string(), sig.to_string(), db(bound).to_string()]);
                sens.write_record(&r)?;

                let mut r = pre.clone();
                let (lj, kj) = (l[(j, j)], km[(j, j)]);
                r.extend([
                    w.to_string(),
                    j.to_string(),
                    db(lj.norm()).to_string(),
                    deg(lj).to_string(),
                    db(kj.norm()).to_string(),
                    deg(kj).to_string(),
                ]);
                bode.write_record(&r)?;

                for (b, name) in BLOCKS.iter().enumerate() {
                    let mut r = pre.clone();
                    r.extend([w.to_string(), j.to_string(), name.to_string(), db(1.0 / set.blocks[b][j].eval(w)?).to_string()]);
                    weights.write_record(&r)?;
                }
            }
            if let Some(img) = &images {
                let factors = std::iter::once(img.mimo[t]).chain(img.siso.iter().map(|s| s[t]));
                for (f, z) in factors.enumerate() {
                    let mut r = pre.clone();
                    r.extend([w.to_string(), format!("gamma{f}"), z.re.to_string(), z.im.to_string()]);
                    nyq.write_record(&r)?;
                }
            }
        }
    }
    for w in [&mut sens, &mut nyq, &mut bode, &mut weights] {
        w.flush().map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}
