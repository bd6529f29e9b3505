use nl2milp::model::{
    extract_context, Clause, ClauseKind, ClauseStatus, DataBundle, Detail, Dim, Domain,
    ModelError, ParamValue, Parameter, StructuredProblem, Variable, VariableStatus,
};
use proptest::prelude::*;

const SYMBOLS: [&str; 5] = ["a", "b", "Cost", "x", "y"];
const CLAUSES: [&str; 4] = ["c1", "c2", "c3", "obj"];
const STATUSES: [ClauseStatus; 6] = [
    ClauseStatus::Described,
    ClauseStatus::Formulated,
    ClauseStatus::Coded,
    ClauseStatus::FormulationFlagged,
    ClauseStatus::CodeFlagged,
    ClauseStatus::Validated,
];

/// The clause lifecycle, written out edge by edge.
const CLAUSE_EDGES: [(ClauseStatus, ClauseStatus); 9] = [
    (ClauseStatus::Described, ClauseStatus::Formulated),
    (ClauseStatus::Formulated, ClauseStatus::Coded),
    (ClauseStatus::Coded, ClauseStatus::Validated),
    (ClauseStatus::Coded, ClauseStatus::CodeFlagged),
    (ClauseStatus::Validated, ClauseStatus::CodeFlagged),
    (ClauseStatus::CodeFlagged, ClauseStatus::Coded),
    (ClauseStatus::Formulated, ClauseStatus::FormulationFlagged),
    (ClauseStatus::Coded, ClauseStatus::FormulationFlagged),
    (ClauseStatus::Validated, ClauseStatus::FormulationFlagged),
];
const CLAUSE_EDGES_BACK: (ClauseStatus, ClauseStatus) =
    (ClauseStatus::FormulationFlagged, ClauseStatus::Formulated);

const VAR_STATUSES: [VariableStatus; 3] = [
    VariableStatus::Defined,
    VariableStatus::Coded,
    VariableStatus::CodeFlagged,
];
const VAR_EDGES: [(VariableStatus, VariableStatus); 3] = [
    (VariableStatus::Defined, VariableStatus::Coded),
    (VariableStatus::Coded, VariableStatus::CodeFlagged),
    (VariableStatus::CodeFlagged, VariableStatus::Coded),
];

fn clause_edge(from: ClauseStatus, to: ClauseStatus) -> bool {
    CLAUSE_EDGES.contains(&(from, to)) || (from, to) == CLAUSE_EDGES_BACK
}

#[derive(Debug, Clone)]
enum Op {
    AddParameter(usize),
    AddVariable(usize, bool),
    AddClause(usize),
    Connect(usize, usize),
    RemoveClause(usize),
    RemoveSymbol(usize),
    Formulate(usize),
    Code(usize),
    ClauseTo(usize, usize),
    CodeVariable(usize),
    VariableTo(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    let s = 0..SYMBOLS.len();
    let c = 0..CLAUSES.len();
    prop_oneof![
        s.clone().prop_map(Op::AddParameter),
        (s.clone(), any::<bool>()).prop_map(|(i, b)| Op::AddVariable(i, b)),
        c.clone().prop_map(Op::AddClause),
        (c.clone(), s.clone()).prop_map(|(a, b)| Op::Connect(a, b)),
        c.clone().prop_map(Op::RemoveClause),
        s.clone().prop_map(Op::RemoveSymbol),
        c.clone().prop_map(Op::Formulate),
        c.clone().prop_map(Op::Code),
        (c.clone(), 0..STATUSES.len()).prop_map(|(a, b)| Op::ClauseTo(a, b)),
        s.clone().prop_map(Op::CodeVariable),
        (s, 0..VAR_STATUSES.len()).prop_map(|(a, b)| Op::VariableTo(a, b)),
    ]
}

fn apply(p: &mut StructuredProblem, op: &Op) -> Result<(), ModelError> {
    match *op {
        Op::AddParameter(i) => p.add_entity(Parameter::new(
            SYMBOLS[i],
            vec![Dim::Named("N".into())],
            "a parameter",
        )),
        Op::AddVariable(i, binary) => p.add_entity(Variable::new(
            SYMBOLS[i],
            vec![],
            if binary { Domain::Binary } else { Domain::Continuous },
            "a variable",
        )),
        Op::AddClause(i) => {
            let clause = if CLAUSES[i] == "obj" {
                Clause::objective("the goal")
            } else {
                Clause::constraint(CLAUSES[i], "a rule")
            };
            p.add_entity(clause)
        }
        Op::Connect(c, s) => p.connect(CLAUSES[c], SYMBOLS[s]),
        Op::RemoveClause(c) => p.remove_clause(CLAUSES[c]).map(|_| ()),
        Op::RemoveSymbol(s) => p.remove_symbol(SYMBOLS[s]),
        Op::Formulate(c) => p.set_formulation(CLAUSES[c], "x \\le 1".into()),
        Op::Code(c) => p.set_clause_code(CLAUSES[c], "x <= 1;".into()),
        Op::ClauseTo(c, s) => p.transition_clause(CLAUSES[c], STATUSES[s]),
        Op::CodeVariable(s) => p.set_variable_code(SYMBOLS[s], format!("var {};", SYMBOLS[s])),
        Op::VariableTo(s, t) => p.transition_variable(SYMBOLS[s], VAR_STATUSES[t]),
    }
}

fn check_invariants(p: &StructuredProblem) -> Result<(), TestCaseError> {
    let objectives = p.clauses().filter(|c| c.kind == ClauseKind::Objective).count();
    prop_assert!(objectives <= 1);

    let mut symbols: Vec<&str> = p
        .parameters()
        .map(|x| x.symbol.as_str())
        .chain(p.variables().map(|v| v.symbol.as_str()))
        .collect();
    let n = symbols.len();
    symbols.sort();
    symbols.dedup();
    prop_assert_eq!(symbols.len(), n, "symbols are unique");

    for (c, s) in p.graph().parameter_edges() {
        prop_assert!(p.clause(c).is_some(), "dangling clause {}", c);
        prop_assert!(p.parameter(s).is_some(), "dangling parameter {}", s);
    }
    for (c, s) in p.graph().variable_edges() {
        prop_assert!(p.clause(c).is_some(), "dangling clause {}", c);
        prop_assert!(p.variable(s).is_some(), "dangling variable {}", s);
    }
    let mut edges: Vec<(&str, &str)> = p
        .graph()
        .parameter_edges()
        .chain(p.graph().variable_edges())
        .collect();
    let n = edges.len();
    edges.sort();
    edges.dedup();
    prop_assert_eq!(edges.len(), n, "no duplicate edges");

    for c in p.clauses() {
        if c.status != ClauseStatus::Described {
            prop_assert!(c.formulation.as_deref().is_some_and(|f| !f.is_empty()));
        }
        if matches!(c.status, ClauseStatus::Coded | ClauseStatus::Validated) {
            prop_assert!(c.code.as_deref().is_some_and(|f| !f.is_empty()));
        }
    }
    for v in p.variables() {
        if v.status == VariableStatus::Coded {
            prop_assert!(v.code.as_deref().is_some_and(|f| !f.is_empty()));
        }
    }

    let back = StructuredProblem::from_json(&p.to_json()).unwrap();
    prop_assert_eq!(&back, p);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_operation_sequences_keep_invariants(ops in prop::collection::vec(op(), 1..40)) {
        let mut p = StructuredProblem::new("background");
        for op in &ops {
            let before = p.clone();
            let clause_before = match op {
                Op::ClauseTo(c, _) => before.clause(CLAUSES[*c]).map(|c| c.status),
                _ => None,
            };
            let var_before = match op {
                Op::VariableTo(s, _) => before.variable(SYMBOLS[*s]).map(|v| v.status),
                _ => None,
            };
            let result = apply(&mut p, op);
            match result {
                Err(_) => prop_assert_eq!(&p, &before, "failed {:?} changed the problem", op),
                Ok(()) => {
                    if let (Op::ClauseTo(_, to), Some(from)) = (op, clause_before) {
                        prop_assert!(clause_edge(from, STATUSES[*to]), "accepted {:?} -> {:?}", from, STATUSES[*to]);
                    }
                    if let (Op::VariableTo(_, to), Some(from)) = (op, var_before) {
                        prop_assert!(VAR_EDGES.contains(&(from, VAR_STATUSES[*to])));
                    }
                }
            }
            match (op, &result) {
                (Op::AddParameter(i) | Op::AddVariable(i, _), Ok(())) => {
                    prop_assert!(before.symbol_kind(SYMBOLS[*i]).is_none());
                }
                (Op::AddParameter(i) | Op::AddVariable(i, _), Err(e)) => {
                    prop_assert!(before.symbol_kind(SYMBOLS[*i]).is_some(), "{}", e);
                }
                (Op::AddClause(i), Err(e)) => {
                    let taken = before.clause(CLAUSES[*i]).is_some()
                        || (CLAUSES[*i] == "obj" && before.objective().is_some());
                    prop_assert!(taken, "{}", e);
                }
                (Op::RemoveClause(c), Ok(())) => {
                    prop_assert_eq!(p.graph().edges_of(CLAUSES[*c]).count(), 0);
                }
                _ => {}
            }
            check_invariants(&p)?;
        }
    }

    #[test]
    fn every_off_lifecycle_transition_is_rejected(from in 0..STATUSES.len(), to in 0..STATUSES.len()) {
        prop_assert_eq!(STATUSES[from].can_transition(STATUSES[to]), clause_edge(STATUSES[from], STATUSES[to]));
    }
}

fn base_problem() -> StructuredProblem {
    let mut p = StructuredProblem::new("a factory plans production");
    let mut data = DataBundle::default();
    data.dimensions.insert("P".into(), 2);
    data.values.insert(
        "Profit".into(),
        ParamValue::Array(vec![ParamValue::Scalar(3.0), ParamValue::Scalar(2.0)]),
    );
    p.data = Some(data);
    p.add_entity(Parameter::new("Profit", vec![Dim::Named("P".into())], "profit per unit"))
        .unwrap();
    p.add_entity(Variable::new("x", vec![Dim::Named("P".into())], Domain::Continuous, "amount"))
        .unwrap();
    p.add_entity(Clause::objective("maximize profit")).unwrap();
    p.add_entity(Clause::constraint("c1", "amounts are nonnegative")).unwrap();
    p.set_links("obj", &["Profit", "x"]).unwrap();
    p.set_links("c1", &["x"]).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn context_ignores_unconnected_entities(
        extra_params in prop::collection::vec("[A-Z][a-z]{2,6}[0-9]?", 0..40),
        extra_vars in prop::collection::vec("[a-z]{2,5}_[0-9]", 0..10),
        extra_clause in any::<bool>(),
    ) {
        let base = base_problem();
        let mut grown = base.clone();
        for s in &extra_params {
            let _ = grown.add_entity(Parameter::new(s.as_str(), vec![Dim::Fixed(3)], "unrelated"));
        }
        for s in &extra_vars {
            let _ = grown.add_entity(Variable::new(s.as_str(), vec![], Domain::Integer, "unrelated"));
        }
        if extra_clause {
            let id = grown.next_constraint_id();
            grown.add_entity(Clause::constraint(id.as_str(), "something else")).unwrap();
            if let Some(s) = extra_params.first() {
                let _ = grown.connect(&id, s);
            }
        }
        for id in ["obj", "c1"] {
            for detail in [Detail::Definitions, Detail::Formulations, Detail::Code] {
                let a = extract_context(&base, id, detail).unwrap().render();
                let b = extract_context(&grown, id, detail).unwrap().render();
                prop_assert_eq!(a, b);
            }
        }
    }
}
