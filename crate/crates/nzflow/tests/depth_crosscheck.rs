//! One-off exhaustive cross-check of the graph-depth search; ignored by
//! default because full path enumeration on the 14-node graph is slow.

use nzflow::adg::build_adg;
use nzflow::kernel::Builtin;

#[test]
#[ignore]
fn depth_matches_exhaustive_enumeration_on_the_factorization_adg() {
    let adg = build_adg(&Builtin::Cholesky.kernel());
    let n = adg.nodes.len();
    let rpo = adg.reverse_postorder();
    let mut idx = vec![0usize; n];
    for (i, v) in rpo.iter().enumerate() {
        idx[*v] = i;
    }
    fn walk(
        v: usize,
        visited: &mut Vec<bool>,
        adg: &nzflow::adg::Adg,
        idx: &[usize],
        count: usize,
        best: &mut usize,
    ) {
        *best = (*best).max(count);
        for &s in adg.successors(v) {
            if visited[s] {
                continue;
            }
            visited[s] = true;
            walk(
                s,
                visited,
                adg,
                idx,
                count + usize::from(idx[s] <= idx[v]),
                best,
            );
            visited[s] = false;
        }
    }
    let mut best = 0;
    for v in 0..n {
        let mut visited = vec![false; n];
        visited[v] = true;
        walk(v, &mut visited, &adg, &idx, 0, &mut best);
    }
    assert_eq!(best, adg.depth().unwrap());
}
