//! Problem files shipped with the crate.

/// The worked example at `gamma = 0.2`.
pub const EX51: &str = include_str!("../fixtures/ex51.blp");
/// `f = y^2/2` without constraints at `gamma = 0.5`.
pub const TOY: &str = include_str!("../fixtures/toy.blp");
/// Convex quadratic over a polyhedron, `m = 2`.
pub const POLYTOPE: &str = include_str!("../fixtures/polytope.blp");
/// Indefinite joint Hessian over a disc.
pub const DISC: &str = include_str!("../fixtures/disc.blp");

pub const ALL: [(&str, &str); 4] = [("ex51", EX51), ("toy", TOY), ("polytope", POLYTOPE), ("disc", DISC)];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_loads_and_round_trips() {
        for (name, text) in ALL {
            let prob = crate::blp::load_problem(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = crate::blp::load_problem(&crate::blp::save_problem(&prob)).unwrap();
            assert_eq!(back, prob, "{name}");
        }
    }
}
