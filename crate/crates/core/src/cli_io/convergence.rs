use crate::diagnostics::{check_ladder, cross_mesh_difference, RateTable};
use crate::error::{Error, Result};
use crate::par::{map_slice, Execution};
use crate::solver::{run, Config, MeshSpec, RunOutput};

/// Copies of `base` on structured meshes refined by factors `1, 2, …, 2^{levels−1}`.
pub fn ladder_configs(base: &Config, levels: usize) -> Result<Vec<Config>> {
    let MeshSpec::Structured { nx, ny, rect } = base.mesh else {
        return Err(Error::invalid("a refinement ladder needs a structured mesh"));
    };
    if levels == 0 {
        return Err(Error::invalid("need at least one level"));
    }
    Ok((0..levels)
        .map(|k| {
            let mut c = base.clone();
            c.mesh = MeshSpec::Structured { nx: nx << k, ny: ny << k, rect };
            if let Some(d) = &base.output.dir {
                c.output.dir = Some(d.join(format!("level_{k}")));
            }
            c
        })
        .collect())
}

/// Runs the levels concurrently; results are in level order.
pub fn run_ladder(configs: &[Config]) -> Result<Vec<RunOutput>> {
    run_ladder_with(configs, Execution::default())
}

pub fn run_ladder_with(configs: &[Config], exec: Execution) -> Result<Vec<RunOutput>> {
    let outs = map_slice(exec, configs, |c| run(c.clone()));
    let mut runs = Vec::with_capacity(outs.len());
    for (k, o) in outs.into_iter().enumerate() {
        runs.push(o.map_err(|f| Error::invalid(format!("level {k}: {f}")))?);
    }
    check_ladder(&runs.iter().collect::<Vec<_>>())?;
    Ok(runs)
}

/// Differences between successive levels at the final time, for density
/// and velocity, against the mesh size of the coarser level.
pub fn self_convergence(runs: &[RunOutput]) -> Result<(RateTable, RateTable)> {
    if runs.len() < 3 {
        return Err(Error::invalid("self-convergence rates need at least three levels"));
    }
    let mut rho = Vec::new();
    let mut u = Vec::new();
    for w in runs.windows(2) {
        let (c, f) = (&w[0], &w[1]);
        let (sc, sf) = (c.trajectory.last(), f.trajectory.last());
        let h = c.mesh.h_max;
        rho.push((h, cross_mesh_difference(&f.mesh, &sf.rho, &c.mesh, &sc.rho)?));
        u.push((h, cross_mesh_difference(&f.mesh, &sf.velocity, &c.mesh, &sc.velocity)?));
    }
    Ok((RateTable::new(&rho)?, RateTable::new(&u)?))
}
