//! The 24-element single-qubit Clifford group, each element decomposed into
//! at most three `R_x` / `R_y` rotations by ±π/2 or π.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::{rotation, Mat2, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    /// Drive phase selecting this axis.
    pub fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => FRAC_PI_2,
        }
    }
}

/// A rotation by `angle` about the equatorial axis at `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub angle: f64,
    pub phase: f64,
}

impl Rotation {
    pub fn new(angle: f64, phase: f64) -> Self {
        Self { angle, phase }
    }

    pub fn about(axis: Axis, angle: f64) -> Self {
        // Negative angles become positive rotations about the opposite axis.
        if angle < 0.0 {
            Self::new(-angle, axis.phase() + PI)
        } else {
            Self::new(angle, axis.phase())
        }
    }

    pub fn unitary(&self) -> Mat2 {
        rotation(self.angle, self.phase)
    }
}

/// Unitary of rotations applied in order (first element acts first).
pub fn compose(rotations: &[Rotation]) -> Mat2 {
    rotations
        .iter()
        .fold(Mat2::identity(), |acc, r| r.unitary().mul(&acc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliffordGate {
    pub index: usize,
    pub unitary: Mat2,
    /// Primitive rotations `(axis, signed angle)`, first acting first.
    pub decomposition: Vec<(Axis, f64)>,
}

impl CliffordGate {
    pub fn rotations(&self) -> Vec<Rotation> {
        self.decomposition.iter().map(|&(a, t)| Rotation::about(a, t)).collect()
    }

    /// Sum of |angle| over the primitives.
    pub fn area(&self) -> f64 {
        self.decomposition.iter().map(|(_, t)| t.abs()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct CliffordGroup {
    gates: Vec<CliffordGate>,
    /// `table[a][b]` is the index of "apply `a`, then `b`".
    table: Vec<[usize; 24]>,
    inverse: [usize; 24],
}

const PHASE_TOL: f64 = 1e-9;

/// Fix the global phase so the largest-modulus entry of the first column is real positive.
fn canonical(u: &Mat2) -> Mat2 {
    let a = u.0[0][0];
    let b = u.0[1][0];
    let pivot = if a.norm() >= b.norm() - 1e-12 { a } else { b };
    u.scale(pivot.conj() / C64::new(pivot.norm(), 0.0))
}

impl CliffordGroup {
    pub fn gates(&self) -> &[CliffordGate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Index of the element equal to `u` up to global phase.
    pub fn find(&self, u: &Mat2) -> Option<usize> {
        self.gates.iter().position(|g| g.unitary.eq_up_to_phase(u, PHASE_TOL))
    }

    /// Index of "apply `first`, then `second`".
    pub fn then(&self, first: usize, second: usize) -> usize {
        self.table[first][second]
    }

    pub fn inverse(&self, g: usize) -> usize {
        self.inverse[g]
    }

    pub fn identity(&self) -> usize {
        0
    }
}

/// Build the group by enumerating primitive sequences in order of length,
/// then pulse area, keeping the first sequence found for each element.
pub fn clifford_group() -> CliffordGroup {
    let generators: [(Axis, f64); 6] = [
        (Axis::X, FRAC_PI_2),
        (Axis::X, -FRAC_PI_2),
        (Axis::Y, FRAC_PI_2),
        (Axis::Y, -FRAC_PI_2),
        (Axis::X, PI),
        (Axis::Y, PI),
    ];
    let mut candidates: Vec<Vec<(Axis, f64)>> = vec![Vec::new()];
    let mut frontier = candidates.clone();
    for _ in 0..3 {
        let next: Vec<Vec<(Axis, f64)>> = frontier
            .iter()
            .flat_map(|seq| {
                generators.iter().map(move |&g| {
                    let mut s = seq.clone();
                    s.push(g);
                    s
                })
            })
            .collect();
        candidates.extend(next.iter().cloned());
        frontier = next;
    }
    let area = |s: &[(Axis, f64)]| s.iter().map(|(_, t)| t.abs()).sum::<f64>();
    // Stable sort keeps generator order as the final tie-break.
    candidates.sort_by(|a, b| a.len().cmp(&b.len()).then(area(a).total_cmp(&area(b))));

    let mut gates: Vec<CliffordGate> = Vec::with_capacity(24);
    for seq in candidates {
        let rots: Vec<Rotation> = seq.iter().map(|&(a, t)| Rotation::about(a, t)).collect();
        let u = canonical(&compose(&rots));
        if gates.iter().any(|g| g.unitary.eq_up_to_phase(&u, PHASE_TOL)) {
            continue;
        }
        gates.push(CliffordGate {
            index: gates.len(),
            unitary: u,
            decomposition: seq,
        });
    }
    assert_eq!(gates.len(), 24, "primitive sequences of length <= 3 generate the Clifford group");

    let mut group = CliffordGroup {
        gates,
        table: vec![[0; 24]; 24],
        inverse: [0; 24],
    };
    for a in 0..24 {
        for b in 0..24 {
            let prod = group.gates[b].unitary.mul(&group.gates[a].unitary);
            group.table[a][b] = group.find(&prod).expect("Clifford group is closed");
        }
    }
    for a in 0..24 {
        group.inverse[a] = (0..24).find(|&b| group.table[a][b] == 0).expect("every element has an inverse");
    }
    group
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_structure() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        assert!(g.gates()[0].decomposition.is_empty());
        assert_eq!(g.gates()[0].area(), 0.0);
        for gate in g.gates() {
            assert!(gate.unitary.is_unitary(1e-10));
            assert!(gate.decomposition.len() <= 3);
            assert!(compose(&gate.rotations()).eq_up_to_phase(&gate.unitary, 1e-8));
        }
        for a in 0..24 {
            for b in 0..24 {
                let prod = g.gates()[b].unitary.mul(&g.gates()[a].unitary);
                assert!(g.gates()[g.then(a, b)].unitary.eq_up_to_phase(&prod, 1e-8));
            }
            assert_eq!(g.then(a, g.inverse(a)), 0);
            assert_eq!(g.then(g.inverse(a), a), 0);
            assert_eq!(g.then(0, a), a);
        }
    }

    #[test]
    fn elements_are_distinct() {
        let g = clifford_group();
        for a in 0..24 {
            for b in a + 1..24 {
                assert!(!g.gates()[a].unitary.eq_up_to_phase(&g.gates()[b].unitary, 1e-6));
            }
        }
    }

    #[test]
    fn pauli_x_is_self_inverse() {
        let g = clifford_group();
        let x = g.find(&rotation(PI, 0.0)).unwrap();
        assert_eq!(g.inverse(x), x);
        assert_eq!(g.gates()[x].decomposition, vec![(Axis::X, PI)]);
    }
}
