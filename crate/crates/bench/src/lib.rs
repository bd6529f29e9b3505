//! Synthetic inputs for the benchmarks.

use nl2milp::model::{DataBundle, ParamValue};

/// A production-planning program over `products` products and `machines`
/// machines, with data. Every coefficient is small and positive so the model
/// is feasible and bounded.
pub fn production(products: usize, machines: usize) -> (String, DataBundle) {
    let src = "\
var x{p in P} >= 0 <= 5, integer;
maximize: sum(p in P) Profit[p] * x[p];
forall(m in M): sum(p in P) Hours[m,p] * x[p] <= Capacity[m];
"
    .to_string();
    let mut data = DataBundle::default();
    data.dimensions.insert("P".into(), products);
    data.dimensions.insert("M".into(), machines);
    let scalar = |v: usize| ParamValue::Scalar(v as f64);
    data.values.insert(
        "Profit".into(),
        ParamValue::Array((0..products).map(|p| scalar(p % 7 + 1)).collect()),
    );
    data.values.insert(
        "Hours".into(),
        ParamValue::Array(
            (0..machines)
                .map(|m| ParamValue::Array((0..products).map(|p| scalar((m + 2 * p) % 5 + 1)).collect()))
                .collect(),
        ),
    );
    data.values.insert(
        "Capacity".into(),
        ParamValue::Array((0..machines).map(|m| scalar(3 * products + m)).collect()),
    );
    (src, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nl2milp::amdl::compile_program;

    #[test]
    fn production_compiles() {
        let (src, data) = production(4, 3);
        let model = compile_program(&src, &data).unwrap();
        assert_eq!(model.vars.len(), 4);
        assert_eq!(model.rows.len(), 3);
    }
}
