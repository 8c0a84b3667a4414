use cpc_nlp::ldl::SymbolicLdl;
use proptest::prelude::*;

// [[A, B^T], [B, -C]] with A diagonally dominant and C = c I has inertia
// (n, m) in any elimination order
fn quasi_definite(
    n: usize,
    m: usize,
    a_off: &[(usize, usize, f64)],
    b: &[(usize, usize, f64)],
    c: f64,
) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut entries = Vec::new();
    let mut values = Vec::new();
    let mut row_sum = vec![0.0; n];
    for &(i, j, v) in a_off {
        let (i, j) = (i % n, j % n);
        if i != j {
            entries.push((i.max(j), i.min(j)));
            values.push(v);
            row_sum[i] += v.abs();
            row_sum[j] += v.abs();
        }
    }
    for (i, s) in row_sum.iter().enumerate() {
        entries.push((i, i));
        values.push(1.0 + s);
    }
    for &(r, j, v) in b {
        entries.push((n + r % m, j % n));
        values.push(v);
    }
    for r in 0..m {
        entries.push((n + r, n + r));
        values.push(-c);
    }
    (entries, values)
}

fn entry() -> impl Strategy<Value = (usize, usize, f64)> {
    (0usize..64, 0usize..64, -2.0..2.0f64)
}

proptest! {
    #[test]
    fn inertia_and_solve(
        n in 1usize..12,
        m in 1usize..6,
        a_off in prop::collection::vec(entry(), 0..30),
        b in prop::collection::vec(entry(), 0..20),
        c in 1e-3..1.0f64,
        order in any::<u64>(),
        rhs in prop::collection::vec(-10.0..10.0f64, 17),
    ) {
        let dim = n + m;
        let (entries, values) = quasi_definite(n, m, &a_off, &b, c);
        // a permutation derived from the seed
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut s = order;
        for i in (1..dim).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let sym = SymbolicLdl::new(dim, &entries, perm);
        let ax = sym.assemble(&values);
        let f = sym.factor(&ax).unwrap();
        prop_assert_eq!(f.inertia(), (n, m));

        let rhs = &rhs[..dim];
        let mut x = rhs.to_vec();
        f.solve(&mut x);
        let mut y = vec![0.0; dim];
        sym.multiply(&ax, &x, &mut y);
        let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i in 0..dim {
            prop_assert!((y[i] - rhs[i]).abs() <= 1e-9 * scale, "row {}: {} vs {}", i, y[i], rhs[i]);
        }
    }
}

#[test]
fn duplicate_entries_are_summed() {
    // [[4, 1], [1, 3]] given as pieces
    let entries = [(0, 0), (1, 0), (0, 0), (1, 1), (0, 1)];
    let values = [3.0, 0.5, 1.0, 3.0, 0.5];
    let sym = SymbolicLdl::new(2, &entries, vec![1, 0]);
    let f = sym.factor(&sym.assemble(&values)).unwrap();
    let mut x = [5.0, 4.0];
    f.solve(&mut x);
    assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12, "{x:?}");
}
