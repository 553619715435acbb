use nalgebra::DMatrix;
use proptest::prelude::*;

use bulkembed::bell::{bell_eval, bell_jet, BellFunction};
use bulkembed::expr::{self, ExprError};
use bulkembed::geometry::{bianchi_divergence, ricci_of, ChartMetric, JetMatrix};
use bulkembed::homotopy::{normalize, GroupExpr};
use bulkembed::jet::{term_count, Jet};

fn jet(nvars: usize, order: usize, scale: f64) -> impl Strategy<Value = Jet> {
    prop::collection::vec(-1.0..1.0f64, term_count(nvars, order)).prop_map(move |c| {
        let mut j = Jet::zero(nvars, order);
        for (dst, v) in j.coeffs_mut().iter_mut().zip(c) {
            *dst = v * scale;
        }
        j
    })
}

/// Jet whose terms stop at `degree`, inside a larger `order`.
fn low_degree_jet(nvars: usize, order: usize, degree: usize) -> impl Strategy<Value = Jet> {
    jet(nvars, degree, 1.0)
        .prop_map(move |low| Jet::from_terms(nvars, order, low.terms().collect::<Vec<_>>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(a in jet(3, 4, 1.0), b in jet(3, 4, 1.0), c in jet(3, 4, 1.0)) {
        prop_assert!((&a * &b).approx_eq(&(&b * &a), 1e-12));
        prop_assert!((&(&a * &b) * &c).approx_eq(&(&a * &(&b * &c)), 1e-11));
        prop_assert!((&a * &(&b + &c)).approx_eq(&(&(&a * &b) + &(&a * &c)), 1e-12));
        prop_assert!((&a * &Jet::one(3, 4)).approx_eq(&a, 0.0));
        prop_assert!((&a - &a).max_abs() == 0.0);
    }

    #[test]
    fn reciprocal_inverts(a in jet(2, 5, 0.3), c0 in 0.5..3.0f64) {
        let a = a.add_scalar(c0 - a.constant_term());
        let inv = a.reciprocal().unwrap();
        prop_assert!((&a * &inv).approx_eq(&Jet::one(2, 5), 1e-10));
    }

    #[test]
    fn mixed_partials_commute(a in jet(3, 5, 1.0)) {
        prop_assert!(a.diff(0).diff(2).approx_eq(&a.diff(2).diff(0), 1e-12));
    }

    #[test]
    fn truncation_is_a_ring_map(a in jet(2, 6, 1.0), b in jet(2, 6, 1.0)) {
        let lhs = (&a * &b).truncate(3);
        let rhs = &a.truncate(3) * &b.truncate(3);
        prop_assert!(lhs.approx_eq(&rhs, 1e-12));
    }

    #[test]
    fn eval_is_multiplicative_below_order(
        a in low_degree_jet(2, 4, 2),
        b in low_degree_jet(2, 4, 2),
        p in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let ab = (&a * &b).eval(&p);
        prop_assert!((ab - a.eval(&p) * b.eval(&p)).abs() < 1e-11);
        prop_assert!(((&a + &b).eval(&p) - a.eval(&p) - b.eval(&p)).abs() < 1e-12);
    }

    #[test]
    fn shift_recenters(a in low_degree_jet(2, 3, 3), d in prop::collection::vec(-0.5..0.5f64, 2),
                       p in prop::collection::vec(-0.5..0.5f64, 2)) {
        let moved = a.shift(&d);
        let q = [p[0] + d[0], p[1] + d[1]];
        prop_assert!((moved.eval(&p) - a.eval(&q)).abs() < 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parser_is_total(src in "[-+*/^() .0-9a-z]{0,24}") {
        // must return, never panic
        let _ = expr::parse(&src, 3);
    }

    #[test]
    fn parse_errors_point_inside_input(src in "[-+*/^()0-9x]{1,16}") {
        let offset = match expr::parse(&src, 2) {
            Err(ExprError::Syntax { offset, .. }) => offset,
            Err(ExprError::UnknownSymbol { offset, .. }) => offset,
            _ => 1,
        };
        prop_assert!((1..=src.len() + 1).contains(&offset));
    }
}

fn poly_source(c: &[f64]) -> String {
    format!(
        "{} + {}*x1 + {}*x2 + {}*x1*x2 + {}*x1^2 - {}*(x2 - 1)^3",
        c[0], c[1], c[2], c[3], c[4], c[5]
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_reproduces_polynomials(
        c in prop::collection::vec(-2.0..2.0f64, 6),
        center in prop::collection::vec(-1.0..1.0f64, 2),
        off in prop::collection::vec(-0.5..0.5f64, 2),
    ) {
        let src = poly_source(&c);
        let e = expr::parse(&src, 2).unwrap();
        let j = e.expand(&center, 3).unwrap();
        let p = [center[0] + off[0], center[1] + off[1]];
        prop_assert!((j.eval(&off) - e.eval(&p)).abs() < 1e-10);
    }

    #[test]
    fn analytic_expansion_matches_to_remainder(x0 in -1.0..1.0f64, h in 1e-3..1e-2f64) {
        let e = expr::parse("exp(sin(x1)) / (2 + cos(x1))", 1).unwrap();
        let j = e.expand(&[x0], 6).unwrap();
        let err = (j.eval(&[h]) - e.eval(&[x0 + h])).abs();
        prop_assert!(err < 10.0 * h.powi(7) + 1e-14, "{err}");
    }
}

/// Near-identity symmetric metric with small analytic perturbations.
fn metric(dim: usize, order: usize) -> impl Strategy<Value = ChartMetric> {
    let n = dim * (dim + 1) / 2;
    prop::collection::vec(jet(dim, order, 0.2), n).prop_map(move |parts| {
        let mut it = parts.into_iter();
        let mut upper = vec![vec![Jet::zero(dim, order); dim]; dim];
        for a in 0..dim {
            for b in a..dim {
                let mut j = it.next().unwrap();
                let c = j.constant_term();
                j = j.add_scalar(if a == b { 1.0 - c } else { -c });
                upper[a][b] = j;
            }
        }
        let m = JetMatrix::symmetric_from_fn(dim, |a, b| upper[a.min(b)][a.max(b)].clone());
        ChartMetric::new(m).unwrap()
    })
}

fn invertible(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-0.4..0.4f64, dim * dim)
        .prop_map(move |v| DMatrix::from_vec(dim, dim, v) + DMatrix::identity(dim, dim))
        .prop_filter("invertible", |a| a.determinant().abs() > 0.2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ricci_is_a_tensor(g in metric(3, 3), a in invertible(3)) {
        let pulled = g.linear_pullback(&a).unwrap();
        let lhs = ricci_of(&pulled).unwrap().ric;
        let moved = ricci_of(&g).unwrap().ric.substitute_linear(&a);
        let rhs = JetMatrix::symmetric_from_fn(3, |i, j| {
            let mut acc = Jet::zero(3, moved.order());
            for k in 0..3 {
                for l in 0..3 {
                    acc = &acc + &moved.get(k, l).scale(a[(k, i)] * a[(l, j)]);
                }
            }
            acc
        });
        let gap = lhs.zip_with(&rhs, |x, y| x - y).max_abs();
        prop_assert!(gap < 1e-9, "{gap}");
        prop_assert!(lhs.asymmetry() < 1e-12);
    }

    #[test]
    fn contracted_bianchi_vanishes(g in metric(3, 4)) {
        for div in bianchi_divergence(&g).unwrap() {
            prop_assert!(div.max_abs() < 1e-9, "{}", div.max_abs());
        }
    }
}

fn group() -> impl Strategy<Value = GroupExpr> {
    let leaf = prop_oneof![
        Just(GroupExpr::Trivial),
        (0u32..3).prop_map(GroupExpr::free),
        (0u64..13).prop_map(GroupExpr::cyclic),
        prop::sample::select(vec!["F2", "Q8"]).prop_map(GroupExpr::named),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop::collection::vec(inner, 0..4).prop_map(GroupExpr::sum)
    })
}

proptest! {
    #[test]
    fn normal_form_idempotent(g in group()) {
        let n = normalize(&g);
        prop_assert_eq!(normalize(&n), n);
    }

    #[test]
    fn normal_form_commutes(a in group(), b in group()) {
        let ab = normalize(&GroupExpr::sum(vec![a.clone(), b.clone()]));
        let ba = normalize(&GroupExpr::sum(vec![b, a]));
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn trivial_is_neutral(a in group()) {
        prop_assert_eq!(normalize(&GroupExpr::sum(vec![a.clone(), GroupExpr::Trivial])), normalize(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bell_jet_agrees_with_eval(
        r in 0.5..2.0f64,
        frac in 0.0..0.6f64,
        angle in 0.0..std::f64::consts::TAU,
        h in prop::collection::vec(-1e-3..1e-3f64, 2),
    ) {
        let f = BellFunction::new(vec![0.1, -0.2], r);
        let about = [0.1 + frac * r * angle.cos(), -0.2 + frac * r * angle.sin()];
        let j = bell_jet(&f, &about, 5).unwrap();
        let exact = bell_eval(&f, &[about[0] + h[0], about[1] + h[1]]);
        prop_assert!((j.constant_term() - bell_eval(&f, &about)).abs() < 1e-15);
        prop_assert!((j.eval(&h) - exact).abs() < 1e-9 * (1.0 + exact));
    }

    #[test]
    fn bell_support(r in 0.5..2.0f64, p in prop::collection::vec(-3.0..3.0f64, 3)) {
        let f = BellFunction::new(vec![0.0; 3], r);
        let d = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = bell_eval(&f, &p);
        if d >= r {
            prop_assert_eq!(v, 0.0);
            prop_assert!(bell_jet(&f, &p, 2).is_err());
        } else {
            prop_assert!(v >= 0.0 && v <= (-1.0 / (r * r)).exp());
        }
    }
}
