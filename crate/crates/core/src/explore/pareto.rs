//! Non-dominated filtering with every objective maximized.

use crate::scalar::Scalar;

/// `a` is at least as good everywhere and strictly better somewhere.
pub fn dominates<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> bool {
    let mut strict = false;
    for i in 0..N {
        if a[i] < b[i] {
            return false;
        }
        if a[i] > b[i] {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated rows, ascending.
///
/// Rows are visited in lexicographically descending order; a row can only
/// be dominated by one visited earlier, so each is checked against the
/// front built so far.
pub fn pareto_indices<T: Scalar, const N: usize>(objs: &[[T; N]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| {
        (0..N)
            .map(|i| objs[b][i].cmp_total(&objs[a][i]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        if !front.iter().any(|&f| dominates(&objs[f], &objs[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_dominated() {
        assert_eq!(pareto_indices(&[[1.0, 2.0, 3.0]]), vec![0]);
        assert_eq!(pareto_indices(&[[1.0, 2.0, 3.0], [2.0, 3.0, 4.0]]), vec![1]);
        assert_eq!(pareto_indices::<f64, 3>(&[]), Vec::<usize>::new());
    }

    #[test]
    fn ties_survive_together() {
        let p = [[1.0f32, 1.0], [1.0, 1.0], [0.5, 2.0]];
        assert_eq!(pareto_indices(&p), vec![0, 1, 2]);
        assert!(!dominates(&p[0], &p[1]));
    }
}
