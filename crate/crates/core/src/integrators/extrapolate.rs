//! Extrapolation of the previous step's stage values to the current stage times.
//!
//! Times are measured from `t_{n-1}` in units of the (uniform) step, so the
//! available nodes are `0` (the state `u^{n-1}`), `c_j` (stage `j` of step
//! `n-1`) and `1` (the current state `u^n`); the targets are `1 + c_i`.
//! Gauss4th uses the first two kinds; other tableaux extrapolate linearly from
//! `0` and `1`.

use crate::spectral::Field;
use crate::tableau::ButcherTableau;

/// Where an interpolation node takes its value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    PrevState,
    PrevStage(usize),
    Current,
}

/// Weights `w[i][m]` so that the extrapolant at stage `i` is `sum_m w[i][m] u(node_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub nodes: Vec<Node>,
    pub weights: Vec<Vec<f64>>,
}

/// Lagrange basis weights of `nodes` evaluated at `x`.
pub fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|m| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != m)
                .map(|(_, &tj)| (x - tj) / (nodes[m] - tj))
                .product()
        })
        .collect()
}

impl Stencil {
    /// Closed-form weights for the two-stage Gauss method, built on
    /// `(u^{n-1}, U_1^{n-1}, U_2^{n-1})`.
    pub fn gauss4_closed_form() -> Self {
        let r3 = 3f64.sqrt();
        Self {
            nodes: vec![Node::PrevState, Node::PrevStage(0), Node::PrevStage(1)],
            weights: vec![
                vec![6.0 - 2.0 * r3, 1.0 - 3.0 * r3, 5.0 * r3 - 6.0],
                vec![6.0 + 2.0 * r3, -(5.0 * r3 + 6.0), 1.0 + 3.0 * r3],
            ],
        }
    }

    /// Lagrange extrapolation through `t_{n-1}` and every `t_{n-1} + c_j`.
    ///
    /// `u^n` is left out: it is a fixed linear combination of `u^{n-1}` and the
    /// stage values, so it adds no information, and for DIRK4th including it
    /// blows the weights up (absolute row sums up to ~575 instead of ~200).
    pub fn lagrange(t: &ButcherTableau) -> Self {
        Self::build(t, false)
    }

    /// As [`Stencil::lagrange`] but with `t_n` as an extra node.
    pub fn lagrange_with_current(t: &ButcherTableau) -> Self {
        Self::build(t, true)
    }

    // Coincident nodes are kept once (first occurrence wins).
    fn build(t: &ButcherTableau, with_current: bool) -> Self {
        let mut nodes = vec![Node::PrevState];
        let mut times = vec![0.0];
        let current = with_current.then_some((Node::Current, 1.0));
        let candidates = t
            .c()
            .iter()
            .enumerate()
            .map(|(j, &c)| (Node::PrevStage(j), c))
            .chain(current);
        for (node, time) in candidates {
            if !times.contains(&time) {
                nodes.push(node);
                times.push(time);
            }
        }
        let weights = t
            .c()
            .iter()
            .map(|&ci| lagrange_weights(&times, 1.0 + ci))
            .collect();
        Self { nodes, weights }
    }

    /// Straight line through `(t_{n-1}, u^{n-1})` and `(t_n, u^n)`.
    ///
    /// DIRK stage values are only second-order accurate, so the higher-degree
    /// Lagrange stencils gain nothing in order, and their large weights
    /// (absolute row sums ~200 for DIRK4th) amplify stiff content from one
    /// step to the next until the scheme loses the dynamics.
    pub fn linear(t: &ButcherTableau) -> Self {
        Self {
            nodes: vec![Node::PrevState, Node::Current],
            weights: t
                .c()
                .iter()
                .map(|&ci| lagrange_weights(&[0.0, 1.0], 1.0 + ci))
                .collect(),
        }
    }

    /// Stencil used by the integrators for tableau `t`: the closed form for
    /// Gauss4th, [`Stencil::linear`] otherwise.
    pub fn for_tableau(t: &ButcherTableau) -> Self {
        if t.name() == "gauss4" && t.stages() == 2 {
            Self::gauss4_closed_form()
        } else {
            Self::linear(t)
        }
    }

    pub fn stages(&self) -> usize {
        self.weights.len()
    }

    /// Evaluates the extrapolants given a lookup from node to value.
    pub fn apply<'a>(&self, value: impl Fn(Node) -> &'a Field) -> Vec<Field> {
        self.weights
            .iter()
            .map(|row| {
                let first = value(self.nodes[0]);
                let mut out = first.map(|v| v * row[0]);
                for (node, &w) in self.nodes.iter().zip(row).skip(1) {
                    out.axpy(w, value(*node));
                }
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use crate::tableau::{dirk4, gauss4};

    #[test]
    fn gauss_closed_form_values() {
        let s = Stencil::gauss4_closed_form();
        let w = &s.weights[0];
        assert!((w[0] - 2.535_898_384_862_246).abs() < 1e-12);
        assert!((w[1] + 4.196_152_422_706_632).abs() < 1e-12);
        assert!((w[2] - 2.660_254_037_844_386).abs() < 1e-12);
        for row in &s.weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_closed_form_is_three_point_lagrange() {
        let g = gauss4();
        let closed = Stencil::gauss4_closed_form();
        let times = [0.0, g.c()[0], g.c()[1]];
        for (i, ci) in g.c().iter().enumerate() {
            let w = lagrange_weights(&times, 1.0 + ci);
            for (a, b) in w.iter().zip(&closed.weights[i]) {
                assert!((a - b).abs() < 1e-12, "{w:?}");
            }
        }
    }

    #[test]
    fn gauss_four_point_form_reduces_to_closed_form() {
        // With u^n = u^{n-1} - sqrt3 U_1 + sqrt3 U_2 the four-node stencil
        // collapses onto the three-node one.
        let g = gauss4();
        let lag = Stencil::lagrange_with_current(&g);
        assert_eq!(lag.nodes.len(), 4);
        let r3 = 3f64.sqrt();
        let closed = Stencil::gauss4_closed_form();
        for i in 0..2 {
            let w = &lag.weights[i];
            let folded = [w[0] + w[3], w[1] - r3 * w[3], w[2] + r3 * w[3]];
            for (a, b) in folded.iter().zip(&closed.weights[i]) {
                assert!((a - b).abs() < 1e-11, "{folded:?}");
            }
        }
    }

    #[test]
    fn stencils_sum_to_one() {
        for t in [gauss4(), dirk4()] {
            for row in Stencil::for_tableau(&t).weights {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gauss_lagrange_is_closed_form() {
        let lag = Stencil::lagrange(&gauss4());
        let closed = Stencil::gauss4_closed_form();
        assert_eq!(lag.nodes, closed.nodes);
        for (a, b) in lag
            .weights
            .iter()
            .flatten()
            .zip(closed.weights.iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dirk_stencil_nodes() {
        let s = Stencil::for_tableau(&dirk4());
        assert_eq!(s.nodes, vec![Node::PrevState, Node::Current]);
        let sigma = dirk4().c()[0];
        assert!((s.weights[0][0] + sigma).abs() < 1e-14);
        assert!((s.weights[0][1] - 1.0 - sigma).abs() < 1e-14);
        assert_eq!(Stencil::lagrange(&dirk4()).nodes.len(), 4);
        let full = Stencil::lagrange_with_current(&dirk4());
        assert_eq!(full.nodes.len(), 5);
        assert_eq!(full.nodes[4], Node::Current);
    }

    #[test]
    fn duplicate_nodes_are_coalesced() {
        // Radau IIA (2 stages) has c_2 = 1, which coincides with t_n.
        let t = crate::tableau::ButcherTableau::new(
            "radau2",
            &[vec![5.0 / 12.0, -1.0 / 12.0], vec![0.75, 0.25]],
            &[0.75, 0.25],
        )
        .unwrap();
        let s = Stencil::lagrange(&t);
        assert_eq!(
            s.nodes,
            vec![Node::PrevState, Node::PrevStage(0), Node::PrevStage(1)]
        );
    }

    #[test]
    fn reproduces_polynomials() {
        // Oracle: sample p(t) at the node times; the line only reproduces
        // degree one.
        let grid = Grid::square_2pi(4).unwrap();
        let quad = |t: f64| 1.0 - 2.0 * t + 3.0 * t * t;
        let line = |t: f64| 1.0 - 2.0 * t;
        for tab in [gauss4(), dirk4()] {
            for (stencil, p) in [
                (Stencil::for_tableau(&tab), if tab.name() == "gauss4" { quad } else { line }),
                (Stencil::linear(&tab), line),
                (Stencil::lagrange(&tab), quad),
                (Stencil::lagrange_with_current(&tab), quad),
            ] {
                let field_at = |t: f64| Field::constant(&grid, p(t));
                let prev = field_at(0.0);
                let stages: Vec<Field> = tab.c().iter().map(|&c| field_at(c)).collect();
                let cur = field_at(1.0);
                let out = stencil.apply(|node| match node {
                    Node::PrevState => &prev,
                    Node::PrevStage(j) => &stages[j],
                    Node::Current => &cur,
                });
                for (i, f) in out.iter().enumerate() {
                    let expected = p(1.0 + tab.c()[i]);
                    assert!((f.data()[0] - expected).abs() < 1e-11, "{}", tab.name());
                }
            }
        }
    }
}
