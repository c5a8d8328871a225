//! Per-group PCA compression of feature channels.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{ChannelGroup, FeatureStack};
use crate::error::{Error, Result};
use crate::spectral::RealGrid;

/// Orthonormal basis for one channel group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupBasis {
    pub name: String,
    pub raw_dims: usize,
    pub kept_dims: usize,
    /// `raw_dims × kept_dims`, columns are principal directions.
    pub basis: DMatrix<f64>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Fewer than `kept_dims` eigenvalues are numerically nonzero.
    pub rank_deficient: bool,
}

impl GroupBasis {
    /// Share of the total variance captured by the kept directions.
    pub fn captured_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        self.eigenvalues[..self.kept_dims].iter().sum::<f64>() / total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub groups: Vec<GroupBasis>,
}

impl PcaProjection {
    pub fn output_channels(&self) -> usize {
        self.groups.iter().map(|g| g.kept_dims).sum()
    }
}

/// Fit one basis per group from the channel covariance over every cell of `samples`.
/// `kept[i]` is the output dimension of group `i`.
pub fn fit_pca(samples: &[FeatureStack], kept: &[usize]) -> Result<PcaProjection> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("PCA needs at least one sample"))?;
    if kept.len() != first.groups.len() {
        return Err(Error::invalid(format!(
            "{} kept dimensions for {} groups",
            kept.len(),
            first.groups.len()
        )));
    }
    for s in samples {
        if s.groups != first.groups {
            return Err(Error::invalid("PCA samples disagree on channel groups"));
        }
    }
    let mut groups = Vec::with_capacity(kept.len());
    for (group, &k) in first.groups.iter().zip(kept) {
        let d = group.range.len();
        if k == 0 || k > d {
            return Err(Error::invalid(format!(
                "cannot keep {k} of {d} dimensions in group {}",
                group.name
            )));
        }
        let cells: usize = samples.iter().map(|s| s.dims().0 * s.dims().1).sum();
        let mut mean = vec![0.0; d];
        for s in samples {
            for (i, ch) in group.range.clone().enumerate() {
                mean[i] += s.channels[ch].as_slice().iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= cells as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for s in samples {
            let chans: Vec<&[f64]> = group
                .range
                .clone()
                .map(|c| s.channels[c].as_slice())
                .collect();
            for m in 0..chans[0].len() {
                for i in 0..d {
                    let a = chans[i][m] - mean[i];
                    for j in i..d {
                        cov[(i, j)] += a * (chans[j][m] - mean[j]);
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        cov /= cells as f64;

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let mut basis = DMatrix::<f64>::zeros(d, k);
        for (col, &src) in order.iter().take(k).enumerate() {
            let v = eig.eigenvectors.column(src);
            // fix the sign so the largest component is positive
            let lead = (0..d)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
                .unwrap_or(0);
            let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..d {
                basis[(r, col)] = sign * v[r];
            }
        }
        let top = eigenvalues.first().copied().unwrap_or(0.0);
        let rank = eigenvalues
            .iter()
            .filter(|&&e| e > 1e-12 * top.max(f64::MIN_POSITIVE))
            .count();
        let rank_deficient = rank < k;
        if rank_deficient {
            log::warn!("group {} has rank {rank} < {k} kept dimensions", group.name);
        }
        groups.push(GroupBasis {
            name: group.name.clone(),
            raw_dims: d,
            kept_dims: k,
            basis,
            eigenvalues,
            rank_deficient,
        });
    }
    Ok(PcaProjection { groups })
}

/// Project every group of `stack` onto its basis (no centering).
pub fn project(stack: &FeatureStack, projection: &PcaProjection) -> Result<FeatureStack> {
    if stack.groups.len() != projection.groups.len() {
        return Err(Error::invalid("projection does not match feature groups"));
    }
    let (rows, cols) = stack.dims();
    let mut channels = Vec::with_capacity(projection.output_channels());
    let mut groups = Vec::with_capacity(stack.groups.len());
    for (group, basis) in stack.groups.iter().zip(&projection.groups) {
        if group.range.len() != basis.raw_dims || group.name != basis.name {
            return Err(Error::invalid(format!(
                "group {} does not match basis {}",
                group.name, basis.name
            )));
        }
        let start = channels.len();
        for k in 0..basis.kept_dims {
            let mut out = RealGrid::zeros(rows, cols);
            for (i, ch) in group.range.clone().enumerate() {
                let coef = basis.basis[(i, k)];
                out.as_mut_slice()
                    .iter_mut()
                    .zip(stack.channels[ch].as_slice())
                    .for_each(|(o, v)| *o += coef * v);
            }
            channels.push(out);
        }
        groups.push(ChannelGroup {
            name: group.name.clone(),
            range: start..channels.len(),
            penalty: group.penalty,
        });
    }
    FeatureStack::new(channels, stack.cell_size, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PenaltyGroup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack_from(channels: Vec<RealGrid>) -> FeatureStack {
        let n = channels.len();
        FeatureStack::new(
            channels,
            4,
            vec![ChannelGroup {
                name: "g".into(),
                range: 0..n,
                penalty: PenaltyGroup::Low,
            }],
        )
        .unwrap()
    }

    #[test]
    fn basis_is_orthonormal_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chans: Vec<RealGrid> = (0..6)
            .map(|k| RealGrid::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0) * (k + 1) as f64))
            .collect();
        let pca = fit_pca(&[stack_from(chans)], &[3]).unwrap();
        let b = &pca.groups[0].basis;
        let gram = b.transpose() * b;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-10);
            }
        }
        let ev = &pca.groups[0].eigenvalues;
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        assert!(!pca.groups[0].rank_deficient);
    }

    #[test]
    fn rank_deficient_input_flagged() {
        // four channels spanning only two directions
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = RealGrid::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let b = RealGrid::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let chans = vec![a.clone(), b.clone(), a.map(|v| 2.0 * v), b.map(|v| -v)];
        let pca = fit_pca(&[stack_from(chans.clone())], &[3]).unwrap();
        assert!(pca.groups[0].rank_deficient);
        assert!((pca.groups[0].captured_variance() - 1.0).abs() < 1e-9);
        let proj = project(&stack_from(chans), &pca).unwrap();
        assert_eq!(proj.len(), 3);
        assert!(proj
            .channels
            .iter()
            .all(|c| c.as_slice().iter().all(|v| v.is_finite())));
    }

    #[test]
    fn full_rank_projection_preserves_energy_of_centered_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chans: Vec<RealGrid> = (0..3)
            .map(|_| RealGrid::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let s = stack_from(chans);
        let pca = fit_pca(std::slice::from_ref(&s), &[3]).unwrap();
        let p = project(&s, &pca).unwrap();
        let before: f64 = s.channels.iter().map(RealGrid::norm_sqr).sum();
        let after: f64 = p.channels.iter().map(RealGrid::norm_sqr).sum();
        assert!((before - after).abs() < 1e-9 * before);
    }
}
