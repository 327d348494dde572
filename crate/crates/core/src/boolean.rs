//! Named ±1-valued functions used as examples and hierarchy components.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fourier::FunctionTable;
use crate::product_space::ProductDomain;

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Majority of an odd number of ±1 inputs (sign of the sum).
pub fn majority(xs: &[f64]) -> f64 {
    sign(xs.iter().sum())
}

/// Product of ±1 inputs.
pub fn parity(xs: &[f64]) -> f64 {
    xs.iter().product()
}

/// Tribes of the given width: +1 iff some consecutive block of `width`
/// inputs (the last block may be shorter) is all +1.
pub fn tribes(xs: &[f64], width: usize) -> f64 {
    if xs.chunks(width.max(1)).any(|t| t.iter().all(|&x| x > 0.0)) {
        1.0
    } else {
        -1.0
    }
}

/// Tribe width whose output is closest to balanced on `n` fair bits,
/// breaking ties toward the narrower width.
pub fn tribes_width(n: usize) -> usize {
    let bias = |w: usize| {
        let full = (n / w) as i32;
        let rem = n % w;
        let mut p_false = (1.0 - 0.5f64.powi(w as i32)).powi(full);
        if rem > 0 {
            p_false *= 1.0 - 0.5f64.powi(rem as i32);
        }
        (0.5 - p_false).abs()
    };
    (1..=n.max(1))
        .min_by(|&a, &b| bias(a).partial_cmp(&bias(b)).unwrap().then(a.cmp(&b)))
        .unwrap_or(1)
}

/// A named function tabulated on `n` fair ±1 bits. Recognized names:
/// `maj3` (n = 3), `maj` (odd n), `parity`, `dictator` (first input), `tribes`.
pub fn named_table(name: &str, n: usize) -> Result<FunctionTable> {
    if n == 0 {
        return Err(Error::domain("named functions need n >= 1"));
    }
    let domain = Arc::new(ProductDomain::uniform_bits(n));
    type Eval = Box<dyn Fn(&[f64]) -> f64>;
    let f: Eval = match name {
        "maj3" if n == 3 => Box::new(majority),
        "maj3" => return Err(Error::domain(format!("maj3 takes 3 inputs, not {n}"))),
        "maj" if n % 2 == 1 => Box::new(majority),
        "maj" => return Err(Error::domain("majority needs an odd number of inputs")),
        "parity" => Box::new(parity),
        "dictator" => Box::new(|xs: &[f64]| xs[0]),
        "tribes" => {
            let w = tribes_width(n);
            Box::new(move |xs: &[f64]| tribes(xs, w))
        }
        other => return Err(Error::domain(format!("unknown named function '{other}'"))),
    };
    Ok(FunctionTable::from_fn(domain, |x| f(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_and_parity() {
        assert_eq!(majority(&[1.0, -1.0, 1.0]), 1.0);
        assert_eq!(majority(&[-1.0, -1.0, 1.0]), -1.0);
        assert_eq!(parity(&[-1.0, -1.0, 1.0]), 1.0);
        assert_eq!(parity(&[-1.0, 1.0, 1.0]), -1.0);
    }

    #[test]
    fn tribes_width_is_near_balanced() {
        assert_eq!(tribes_width(4), 2);
        assert_eq!(tribes(&[1.0, 1.0, -1.0, -1.0], 2), 1.0);
        assert_eq!(tribes(&[1.0, -1.0, -1.0, 1.0], 2), -1.0);
    }

    #[test]
    fn named_tables() {
        let t = named_table("maj3", 3).unwrap();
        assert_eq!(t.values(), &[-1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0]);
        assert!(named_table("maj3", 4).is_err());
        assert!(named_table("maj", 4).is_err());
        assert!(named_table("nope", 2).is_err());
        let d = named_table("dictator", 2).unwrap();
        assert_eq!(d.values(), &[-1.0, 1.0, -1.0, 1.0]);
    }
}
