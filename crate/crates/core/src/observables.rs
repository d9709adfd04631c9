//! Fast paths for the observables tracked throughout the paper's figures:
//! excitation density, per-site occupations and the transverse coherence.
//!
//! "Excited" always means the top local level (level 1 for spin chains,
//! level 2 = r for the three-level EIT chain), and the coherence operator
//! couples the ground level to the top level, so the same functions serve
//! both local dimensions.

use crate::spin_space::{BasisLayout, DensityMatrix, PureState, C64};

/// Mean occupation (1/N) Σ_k ⟨n_k⟩ of a normalized state.
pub fn mean_occupation(state: &PureState) -> f64 {
    let layout = state.layout();
    let mut acc = 0.0;
    if layout.local_dim == 2 {
        for (ordinal, a) in state.amplitudes().iter().enumerate() {
            let w = a.norm_sqr();
            if w != 0.0 {
                acc += w * (ordinal.count_ones() as f64);
            }
        }
    } else {
        for (ordinal, a) in state.amplitudes().iter().enumerate() {
            let w = a.norm_sqr();
            if w != 0.0 {
                acc += w * excited_count(ordinal, layout) as f64;
            }
        }
    }
    acc / (layout.n_sites as f64 * state.squared_norm())
}

/// ⟨n_k⟩ for every site, in one pass.
pub fn site_occupations(state: &PureState) -> Vec<f64> {
    let layout = state.layout();
    let top = layout.local_dim - 1;
    let mut acc = vec![0.0; layout.n_sites];
    for (ordinal, a) in state.amplitudes().iter().enumerate() {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (k, slot) in acc.iter_mut().enumerate() {
            if layout.level(ordinal, k) == top {
                *slot += w;
            }
        }
    }
    let norm = state.squared_norm();
    for v in &mut acc {
        *v /= norm;
    }
    acc
}

/// Mean transverse coherence (1/N) Σ_k ⟨σ_k^x⟩ with
/// σ_k^x = |g_k⟩⟨e_k| + |e_k⟩⟨g_k| between the ground and top levels.
pub fn mean_sigma_x(state: &PureState) -> f64 {
    let layout = state.layout();
    let amps = state.amplitudes();
    let top = (layout.local_dim - 1) as usize;
    let mut acc = 0.0;
    for k in 0..layout.n_sites {
        let stride = layout.stride(k);
        let shift = top * stride;
        for (ordinal, a) in amps.iter().enumerate() {
            if layout.level(ordinal, k) == 0 {
                let partner = amps[ordinal + shift];
                acc += 2.0 * (a.conj() * partner).re;
            }
        }
    }
    acc / (layout.n_sites as f64 * state.squared_norm())
}

/// Tr[ρ n̄] from a density matrix.
pub fn rho_mean_occupation(rho: &DensityMatrix) -> f64 {
    let layout = rho.layout();
    let mut acc = 0.0;
    for ordinal in 0..rho.dim() {
        let w = rho.matrix()[(ordinal, ordinal)].re;
        acc += w * excited_count(ordinal, layout) as f64;
    }
    acc / layout.n_sites as f64
}

/// Tr[ρ n_k] for every site.
pub fn rho_site_occupations(rho: &DensityMatrix) -> Vec<f64> {
    let layout = rho.layout();
    let top = layout.local_dim - 1;
    let mut acc = vec![0.0; layout.n_sites];
    for ordinal in 0..rho.dim() {
        let w = rho.matrix()[(ordinal, ordinal)].re;
        for (k, slot) in acc.iter_mut().enumerate() {
            if layout.level(ordinal, k) == top {
                *slot += w;
            }
        }
    }
    acc
}

/// Tr[ρ σ̄ˣ] with the same ground–top coherence convention as
/// [`mean_sigma_x`].
pub fn rho_mean_sigma_x(rho: &DensityMatrix) -> f64 {
    let layout = rho.layout();
    let top = (layout.local_dim - 1) as usize;
    let m = rho.matrix();
    let mut acc = 0.0;
    for k in 0..layout.n_sites {
        let stride = layout.stride(k);
        let shift = top * stride;
        for ordinal in 0..rho.dim() {
            if layout.level(ordinal, k) == 0 {
                acc += 2.0 * m[(ordinal + shift, ordinal)].re;
            }
        }
    }
    acc / layout.n_sites as f64
}

#[inline]
fn excited_count(ordinal: usize, layout: BasisLayout) -> u32 {
    if layout.local_dim == 2 {
        ordinal.count_ones()
    } else {
        let mut rest = ordinal;
        let mut count = 0;
        for _ in 0..layout.n_sites {
            if rest % 3 == 2 {
                count += 1;
            }
            rest /= 3;
        }
        count
    }
}

/// Scratch-free variants used by the trajectory sampler on raw amplitude
/// slices (unnormalised; pass the squared norm explicitly).
pub(crate) fn raw_mean_occupation(amps: &[C64], layout: BasisLayout, norm_sq: f64) -> f64 {
    let mut acc = 0.0;
    for (ordinal, a) in amps.iter().enumerate() {
        let w = a.norm_sqr();
        if w != 0.0 {
            acc += w * excited_count(ordinal, layout) as f64;
        }
    }
    acc / (layout.n_sites as f64 * norm_sq)
}

pub(crate) fn raw_site_occupations(
    amps: &[C64],
    layout: BasisLayout,
    norm_sq: f64,
    out: &mut [f64],
) {
    out.fill(0.0);
    let top = layout.local_dim - 1;
    for (ordinal, a) in amps.iter().enumerate() {
        let w = a.norm_sqr();
        if w == 0.0 {
            continue;
        }
        for (k, slot) in out.iter_mut().enumerate() {
            if layout.level(ordinal, k) == top {
                *slot += w;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm_sq;
    }
}

pub(crate) fn raw_mean_sigma_x(amps: &[C64], layout: BasisLayout, norm_sq: f64) -> f64 {
    let top = (layout.local_dim - 1) as usize;
    let mut acc = 0.0;
    for k in 0..layout.n_sites {
        let stride = layout.stride(k);
        let shift = top * stride;
        for (ordinal, a) in amps.iter().enumerate() {
            if layout.level(ordinal, k) == 0 {
                acc += 2.0 * (a.conj() * amps[ordinal + shift]).re;
            }
        }
    }
    acc / (layout.n_sites as f64 * norm_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_space::SpinConfiguration;
    use approx::assert_abs_diff_eq;

    #[test]
    fn occupation_of_product_state() {
        let kappa: f64 = 0.2;
        let factor = vec![
            C64::new((1.0 - kappa).sqrt(), 0.0),
            C64::new(kappa.sqrt(), 0.0),
        ];
        let s = PureState::product_state(&vec![factor; 6], 2).unwrap();
        assert_abs_diff_eq!(mean_occupation(&s), kappa, epsilon = 1e-13);
        for v in site_occupations(&s) {
            assert_abs_diff_eq!(v, kappa, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(
            mean_sigma_x(&s),
            2.0 * (kappa * (1.0 - kappa)).sqrt(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn density_matrix_observables_match_pure() {
        let kappa: f64 = 0.3;
        let factor = vec![
            C64::new((1.0 - kappa).sqrt(), 0.0),
            C64::new(kappa.sqrt(), 0.0),
        ];
        let s = PureState::product_state(&vec![factor; 3], 2).unwrap();
        let rho = DensityMatrix::from_pure(&s);
        assert_abs_diff_eq!(rho_mean_occupation(&rho), mean_occupation(&s), epsilon = 1e-13);
        assert_abs_diff_eq!(rho_mean_sigma_x(&rho), mean_sigma_x(&s), epsilon = 1e-13);
    }

    #[test]
    fn three_level_occupation_counts_r_only() {
        // (g, r, p) has one excited site
        let config = SpinConfiguration::new(vec![0, 2, 1], 3).unwrap();
        let s = PureState::basis_state(&config);
        assert_abs_diff_eq!(mean_occupation(&s), 1.0 / 3.0, epsilon = 1e-15);
        let occ = site_occupations(&s);
        assert_eq!(occ, vec![0.0, 1.0, 0.0]);
    }
}
