use std::fmt;
use std::sync::Arc;

use num_traits::Zero;

use super::{
    binomial, eval_f, eval_g, eval_h, for_each_submask, omega, rational, PoleError, Rational,
};

type Evaluator = dyn Fn(&Rational, &[Rational]) -> Result<Rational, PoleError> + Send + Sync;

/// A rational function of `(η; φ_1, …, φ_J)`, available by evaluation only.
#[derive(Clone)]
pub struct SymFunction {
    arity: usize,
    label: String,
    symmetric: bool,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for SymFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymFunction")
            .field("label", &self.label)
            .field("arity", &self.arity)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl SymFunction {
    /// `symmetric` promises invariance under permutations of the frequencies;
    /// [`sym_product`] relies on it to average over splits instead of permutations.
    pub fn new<F>(arity: usize, label: impl Into<String>, symmetric: bool, eval: F) -> Self
    where
        F: Fn(&Rational, &[Rational]) -> Result<Rational, PoleError> + Send + Sync + 'static,
    {
        SymFunction {
            arity,
            label: label.into(),
            symmetric,
            eval: Arc::new(eval),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn eval(&self, eta: &Rational, phis: &[Rational]) -> Result<Rational, PoleError> {
        assert_eq!(
            phis.len(),
            self.arity,
            "{} takes {} frequencies",
            self.label,
            self.arity
        );
        (self.eval)(eta, phis)
    }

    pub fn constant(arity: usize, value: Rational) -> Self {
        SymFunction::new(arity, format!("const({value})"), true, move |_, _| {
            Ok(value.clone())
        })
    }

    /// `ω_a` as a function of one frequency.
    pub fn omega(a: i64) -> Self {
        SymFunction::new(1, format!("omega_{a}"), true, move |_, _| Ok(omega(a)))
    }

    /// `ξ_{J,K}`: `(-1)^{K-1}/η` for `J = 1`, zero for `J ≥ 2`.
    pub fn xi(j: usize, k: i64) -> Self {
        SymFunction::new(j, format!("xi_{j},{k}"), true, move |eta, _| {
            if j != 1 || !(0..=1).contains(&k) {
                return Ok(Rational::zero());
            }
            if eta.is_zero() {
                return Err(PoleError {
                    multiplier: 1,
                    terms: 0,
                });
            }
            let sign = if k % 2 == 1 { 1 } else { -1 };
            Ok(rational(sign, 1) / eta)
        })
    }

    pub fn h(j: usize) -> Self {
        SymFunction::new(j, format!("h_{j}"), j <= 1, eval_h)
    }

    pub fn f(j: usize, k: i64) -> Self {
        SymFunction::new(j, format!("f_{j},{k}"), true, move |eta, phis| {
            eval_f(k, eta, phis)
        })
    }

    pub fn g(j: usize, k: i64) -> Self {
        SymFunction::new(j, format!("g_{j},{k}"), true, move |eta, phis| {
            eval_g(k, eta, phis)
        })
    }

    /// Same function with every frequency negated.
    pub fn breve(&self) -> Self {
        let inner = self.eval.clone();
        SymFunction {
            arity: self.arity,
            label: format!("breve({})", self.label),
            symmetric: self.symmetric,
            eval: Arc::new(move |eta, phis| {
                let flipped: Vec<Rational> = phis.iter().map(|p| -p).collect();
                inner(eta, &flipped)
            }),
        }
    }

    pub fn scaled(&self, factor: Rational) -> Self {
        let inner = self.eval.clone();
        SymFunction {
            arity: self.arity,
            label: format!("{factor}*{}", self.label),
            symmetric: self.symmetric,
            eval: Arc::new(move |eta, phis| Ok(inner(eta, phis)? * &factor)),
        }
    }

    /// Pointwise sum; arities must match.
    pub fn sum(parts: &[SymFunction], label: impl Into<String>) -> Self {
        let arity = parts.first().map_or(0, |p| p.arity);
        assert!(
            parts.iter().all(|p| p.arity == arity),
            "summands must share arity"
        );
        let symmetric = parts.iter().all(|p| p.symmetric);
        let parts: Vec<SymFunction> = parts.to_vec();
        SymFunction::new(arity, label, symmetric, move |eta, phis| {
            parts
                .iter()
                .try_fold(Rational::zero(), |acc, p| Ok(acc + p.eval(eta, phis)?))
        })
    }

    /// Average over all orderings of the frequencies.
    pub fn symmetrized(&self) -> Self {
        if self.symmetric {
            return self.clone();
        }
        let inner = self.clone();
        SymFunction::new(
            self.arity,
            format!("sym({})", self.label),
            true,
            move |eta, phis| {
                let mut total = Rational::zero();
                let mut count = 0i64;
                let mut failure = None;
                for_each_permutation(phis.len(), |perm| {
                    if failure.is_some() {
                        return;
                    }
                    let permuted: Vec<Rational> = perm.iter().map(|&i| phis[i].clone()).collect();
                    match inner.eval(eta, &permuted) {
                        Ok(v) => total += v,
                        Err(e) => failure = Some(e),
                    }
                    count += 1;
                });
                match failure {
                    Some(e) => Err(e),
                    None => Ok(total / rational(count, 1)),
                }
            },
        )
    }

    /// `𝒢_{J,0}` assembled from symmetric products, normalised so that
    /// `f_{J,0} − f̆_{J,0} = (Σφ)·𝒢_{J,0}`.
    pub fn script_g(j_total: usize) -> Self {
        let mut parts = Vec::new();
        for j in 1..j_total {
            for k in 1..=j.min(j_total - j) as i64 {
                let product = sym_product(
                    &SymFunction::g(j, k),
                    &SymFunction::g(j_total - j, k).breve(),
                );
                parts.push(product.scaled(rational(-1, 4 * k)));
            }
        }
        let mut sum = SymFunction::sum(&parts, format!("G_{j_total},0"));
        sum.arity = j_total;
        sum
    }
}

/// Calls `visit` with every permutation of `0..n` (Heap's algorithm).
pub(crate) fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// `(p ⊙ q)(η; φ) = (1/(I+J)!) Σ_σ p(η; φ_σ(1..I)) q(η; φ_σ(I+1..I+J))`.
///
/// For symmetric factors only the split of the frequencies matters, so the
/// average runs over the `C(I+J, I)` subsets; otherwise over all permutations.
pub fn sym_product(p: &SymFunction, q: &SymFunction) -> SymFunction {
    if !(p.symmetric && q.symmetric) {
        return sym_product_by_permutations(p, q);
    }
    let (p, q) = (p.clone(), q.clone());
    let (i, j) = (p.arity, q.arity);
    let label = format!("({} . {})", p.label, q.label);
    SymFunction::new(i + j, label, true, move |eta, phis| {
        let n = phis.len();
        let full = ((1u64 << n) - 1) as u32;
        let mut total = Rational::zero();
        let mut failure = None;
        for_each_submask(full, i as u32, |sub| {
            if failure.is_some() {
                return;
            }
            let left: Vec<Rational> = (0..n)
                .filter(|b| sub >> b & 1 == 1)
                .map(|b| phis[b].clone())
                .collect();
            let right: Vec<Rational> = (0..n)
                .filter(|b| sub >> b & 1 == 0)
                .map(|b| phis[b].clone())
                .collect();
            match p
                .eval(eta, &left)
                .and_then(|a| Ok(a * q.eval(eta, &right)?))
            {
                Ok(v) => total += v,
                Err(e) => failure = Some(e),
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(total / rational(binomial(n as u32, i as u32), 1)),
        }
    })
}

/// The symmetric product straight from its definition, over all `(I+J)!` orderings.
pub fn sym_product_by_permutations(p: &SymFunction, q: &SymFunction) -> SymFunction {
    let (p, q) = (p.clone(), q.clone());
    let (i, j) = (p.arity, q.arity);
    let label = format!("({} . {})", p.label, q.label);
    SymFunction::new(i + j, label, true, move |eta, phis| {
        let mut total = Rational::zero();
        let mut count = 0i64;
        let mut failure = None;
        for_each_permutation(i + j, |perm| {
            if failure.is_some() {
                return;
            }
            let left: Vec<Rational> = perm[..i].iter().map(|&k| phis[k].clone()).collect();
            let right: Vec<Rational> = perm[i..].iter().map(|&k| phis[k].clone()).collect();
            match p
                .eval(eta, &left)
                .and_then(|a| Ok(a * q.eval(eta, &right)?))
            {
                Ok(v) => total += v,
                Err(e) => failure = Some(e),
            }
            count += 1;
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(total / rational(count, 1)),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divisor::eval_script_g;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        rational(n, 1)
    }

    fn linear() -> SymFunction {
        SymFunction::new(1, "phi", true, |_, phis| Ok(phis[0].clone()))
    }

    #[test]
    fn permutation_count() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(4, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 24);
        let mut zero = 0;
        for_each_permutation(0, |_| zero += 1);
        assert_eq!(zero, 1);
    }

    #[test]
    fn product_examples() {
        let prod = sym_product(&linear(), &SymFunction::constant(1, r(1)));
        assert_eq!(prod.eval(&r(9), &[r(3), r(8)]).unwrap(), rational(11, 2));

        let one = SymFunction::constant(0, r(1));
        assert_eq!(sym_product(&one, &one).eval(&r(2), &[]).unwrap(), r(1));

        let prod = sym_product(&SymFunction::omega(1), &SymFunction::g(1, 1));
        assert_eq!(prod.eval(&r(2), &[r(1), r(1)]).unwrap(), rational(-1, 2));
    }

    #[test]
    fn composed_script_g_matches_table() {
        let eta = rational(5, 3);
        let phis = [rational(1, 2), r(-2), rational(7, 4), r(3)];
        for j in 2..=4 {
            let composed = SymFunction::script_g(j).eval(&eta, &phis[..j]).unwrap();
            assert_eq!(composed, eval_script_g(&eta, &phis[..j]).unwrap());
        }
    }

    #[test]
    fn xi_reproduces_first_order_f() {
        let eta = rational(3, 2);
        for k in 0..=1 {
            assert_eq!(
                SymFunction::xi(1, k).eval(&eta, &[r(4)]).unwrap(),
                SymFunction::f(1, k).eval(&eta, &[r(4)]).unwrap()
            );
        }
        assert_eq!(
            SymFunction::xi(2, 1).eval(&eta, &[r(4), r(1)]).unwrap(),
            r(0)
        );
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (-40i64..40, 1i64..12).prop_map(|(n, d)| rational(n, d))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn split_average_equals_permutation_average(
            eta in small_rational(),
            phis in proptest::collection::vec(small_rational(), 5),
            i in 0usize..=3,
        ) {
            let j = (5 - i).min(2);
            let n = i + j;
            let p = if i == 0 { SymFunction::constant(0, r(3)) } else { SymFunction::f(i, 1) };
            let q = SymFunction::new(j, "poly", true, |eta, phis| {
                Ok(phis.iter().fold(eta.clone(), |acc, x| acc * (x + r(2))))
            });
            let fast = sym_product(&p, &q).eval(&eta, &phis[..n]);
            let slow = sym_product_by_permutations(&p, &q).eval(&eta, &phis[..n]);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn products_are_permutation_invariant(
            eta in small_rational(),
            phis in proptest::collection::vec(small_rational(), 4),
            shift in 0usize..4,
        ) {
            let prod = sym_product(&SymFunction::h(2), &SymFunction::g(2, 1));
            let mut rotated = phis.clone();
            rotated.rotate_left(shift);
            rotated.swap(0, 3);
            // At a pole only the fact of hitting it is order independent, not which factor reports it.
            match (prod.eval(&eta, &phis), prod.eval(&eta, &rotated)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (a, b) => prop_assert!(a.is_err() && b.is_err()),
            }
        }
    }
}
