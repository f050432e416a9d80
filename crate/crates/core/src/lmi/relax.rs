//! Double-sum relaxation classes.
//!
//! `α_i(x) α_j(x) = Π_q w^q_{i_q} w^q_{j_q}`, so two ordered pairs `(i, j)`
//! share a monomial exactly when, position by position, the unordered pairs
//! `{i_q, j_q}` agree. Grouping by that key yields `3^r` classes that
//! partition `𝔹^r × 𝔹^r`; requiring each class sum to be negative definite
//! makes the full double sum negative definite.

use crate::dar::{multi_index, vertex_of};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaxationClass {
    /// Per position, the unordered pair stored as `(low, high)`.
    pub pairs: Vec<(u8, u8)>,
    /// Ordered `(i, j)` vertex-index pairs realizing this class.
    pub members: Vec<(usize, usize)>,
}

impl RelaxationClass {
    /// Whether `(i, j)` (vertex indices over `r` bits) belongs to this class.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        let r = self.pairs.len();
        multi_index(i, r)
            .into_iter()
            .zip(multi_index(j, r))
            .zip(&self.pairs)
            .all(|((a, b), &pair)| (a.min(b), a.max(b)) == pair)
    }

    pub fn label(&self) -> String {
        let body: Vec<String> = self
            .pairs
            .iter()
            .map(|(a, b)| format!("{a}{b}"))
            .collect();
        format!("relax[{}]", body.join(","))
    }
}

const POSITION_PAIRS: [(u8, u8); 3] = [(0, 0), (0, 1), (1, 1)];

pub fn relaxation_classes(r: usize) -> Vec<RelaxationClass> {
    let count = 3usize.pow(r as u32);
    (0..count)
        .map(|mut code| {
            let mut pairs = vec![(0, 0); r];
            for q in (0..r).rev() {
                pairs[q] = POSITION_PAIRS[code % 3];
                code /= 3;
            }
            let mut realizations: Vec<(Vec<u8>, Vec<u8>)> = vec![(Vec::new(), Vec::new())];
            for &(a, b) in &pairs {
                let options: &[(u8, u8)] = if a == b { &[(a, a)] } else { &[(0, 1), (1, 0)] };
                realizations = realizations
                    .into_iter()
                    .flat_map(|(i, j)| {
                        options.iter().map(move |&(x, y)| {
                            let mut i = i.clone();
                            let mut j = j.clone();
                            i.push(x);
                            j.push(y);
                            (i, j)
                        })
                    })
                    .collect();
            }
            let members = realizations
                .iter()
                .map(|(i, j)| (vertex_of(i), vertex_of(j)))
                .collect();
            RelaxationClass { pairs, members }
        })
        .collect()
}
