//! Number-theoretic building blocks of the constructive finder: counting unit solutions of a
//! linear congruence mod `p`, hitting a target with unit weights mod `p^k`, and choosing a
//! mod-`p` zero combination from `m + 1` integers.

use thiserror::Error;

use crate::group::{add_mod, inverse_mod, mul_mod, sub_mod, GroupParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LemmaError {
    #[error("need at least two coefficients coprime to p, found {0}")]
    TooFewUnits(usize),
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("empty coefficient list")]
    Empty,
    #[error("solution count does not fit in 128 bits")]
    Overflow,
}

/// Number of `(x_1..x_m) in [1, p-1]^m` with `sum a_j x_j = 0 (mod p)`.
///
/// Peels one coefficient at a time: a unit `a_1` leaves exactly one `x_1` for every tail
/// whose sum is non-zero, so `N(a_1..a_m) = (p-1)^(m-1) - N(a_2..a_m)`; a multiple of `p`
/// contributes a free factor `p - 1`.
pub fn count_solutions(coeffs: &[u64], p: u64) -> Result<u128, LemmaError> {
    let (&first, rest) = coeffs.split_first().ok_or(LemmaError::Empty)?;
    let free = (p - 1) as u128;
    if rest.is_empty() {
        return Ok(if first % p == 0 { free } else { 0 });
    }
    let tail = count_solutions(rest, p)?;
    if first % p == 0 {
        free.checked_mul(tail).ok_or(LemmaError::Overflow)
    } else {
        let all = u32::try_from(rest.len()).ok().and_then(|k| free.checked_pow(k)).ok_or(LemmaError::Overflow)?;
        Ok(all - tail)
    }
}

/// Unit weights `x_i` (coprime to `p`, in `[1, modulus)`) with `sum a_i x_i = target`
/// modulo `modulus = p^k`, `k >= 1`.
///
/// Every weight except the first two unit coefficients' is 1. The first unit's weight is
/// scanned upwards and the second one solved for; the solved value runs over as many
/// distinct residues as there are units, more than the `p^(k-1)` non-units, so the scan
/// stops.
pub fn unit_pair_weights(p: u64, modulus: u64, coeffs: &[u64], target: u64) -> Result<Vec<u64>, LemmaError> {
    let units: Vec<usize> = coeffs.iter().enumerate().filter(|(_, a)| *a % p != 0).map(|(i, _)| i).take(2).collect();
    let &[i1, i2] = units.as_slice() else {
        return Err(LemmaError::TooFewUnits(units.len()));
    };
    let mut weights = vec![1u64; coeffs.len()];
    let fixed =
        coeffs.iter().enumerate().filter(|(i, _)| *i != i1 && *i != i2).fold(0u64, |acc, (_, &a)| add_mod(acc, a, modulus));
    let rhs = sub_mod(target, fixed, modulus);
    let inv2 = inverse_mod(coeffs[i2], modulus).expect("unit coefficient");
    for x1 in (1..modulus).filter(|u| u % p != 0) {
        let x2 = mul_mod(inv2, sub_mod(rhs, mul_mod(coeffs[i1], x1, modulus), modulus), modulus);
        if !x2.is_multiple_of(p) {
            weights[i1] = x1;
            weights[i2] = x2;
            return Ok(weights);
        }
    }
    unreachable!("more units than non-units modulo a prime power")
}

/// [`unit_pair_weights`] modulo `p^alpha` of the given group.
pub fn solve_unit_pair(params: &GroupParams, coeffs: &[u64], target: u64) -> Result<Vec<u64>, LemmaError> {
    if coeffs.len() < 2 {
        return Err(LemmaError::TooFewValues { need: 2, got: coeffs.len() });
    }
    let m = params.modulus_a();
    let reduced: Vec<u64> = coeffs.iter().map(|a| a % m).collect();
    unit_pair_weights(params.p(), m, &reduced, target % m)
}

/// Result of [`select_mod_p_zero`]: 0-based positions and weights in `[1, p-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModPSelection {
    pub positions: Vec<usize>,
    pub weights: Vec<u64>,
}

/// From `m + 1` integers (`m >= 2`), picks `m` of them and weights in `[1, p-1]` making the
/// weighted sum vanish mod `p`.
pub fn select_mod_p_zero(coeffs: &[u64], p: u64) -> Result<ModPSelection, LemmaError> {
    if coeffs.len() < 3 {
        return Err(LemmaError::TooFewValues { need: 3, got: coeffs.len() });
    }
    let m = coeffs.len() - 1;
    let zeros: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i].is_multiple_of(p)).collect();
    if zeros.len() >= m {
        return Ok(ModPSelection { positions: zeros[..m].to_vec(), weights: vec![1; m] });
    }
    // At least two non-multiples remain after dropping one entry: a zero if there is one,
    // otherwise the last entry.
    let drop = zeros.last().copied().unwrap_or(m);
    let positions: Vec<usize> = (0..coeffs.len()).filter(|&i| i != drop).collect();
    let reduced: Vec<u64> = positions.iter().map(|&i| coeffs[i] % p).collect();
    let weights = unit_pair_weights(p, p, &reduced, 0)?;
    Ok(ModPSelection { positions, weights })
}
