use riskdiv_core::reference::{
    compare_cells, compare_with_reference, errata, reference_cells, CellStatus,
};
use riskdiv_core::tables::{generate_table, TableId, TableRequest};

fn csv(id: TableId) -> String {
    generate_table(&TableRequest::reference(id))
        .unwrap()
        .to_csv()
}

#[test]
fn single_policy_table_has_no_flags() {
    let report = compare_with_reference(&csv(TableId::T1), TableId::T1).unwrap();
    assert_eq!(report.cells.len(), 21);
    assert_eq!(report.flagged().count(), 0);
}

#[test]
fn iid_table_flags_only_the_erratum() {
    let report = compare_with_reference(&csv(TableId::T2), TableId::T2).unwrap();
    let flagged: Vec<_> = report
        .flagged()
        .map(|c| (c.row.as_str(), c.column.as_str()))
        .collect();
    assert_eq!(flagged, [("TVaR:50", "p=1/4")]);
    assert!(report.is_clean());
}

#[test]
fn every_reference_cell_reported_once() {
    for id in [TableId::T1, TableId::T2, TableId::T3, TableId::T4] {
        let report = compare_with_reference(&csv(id), id).unwrap();
        let reference = reference_cells(id).unwrap();
        assert_eq!(report.cells.len(), reference.len());
        for (r, c) in reference.iter().zip(&report.cells) {
            assert_eq!((&r.row, &r.column), (&c.row, &c.column));
        }
    }
}

#[test]
fn perturbed_fixture_flags_exactly_that_cell() {
    let generated = csv(TableId::T2);
    let mut reference = reference_cells(TableId::T2).unwrap();
    let target = reference
        .iter_mut()
        .find(|c| c.row == "VaR:100" && c.column == "p=1/2")
        .unwrap();
    target.value += 0.01;
    let report = compare_cells(&generated, TableId::T2, &reference, &[]).unwrap();
    let flagged: Vec<_> = report
        .flagged()
        .map(|c| (c.row.as_str(), c.column.as_str()))
        .collect();
    assert_eq!(flagged, [("VaR:100", "p=1/2"), ("TVaR:50", "p=1/4")]);
    // without the errata list both are unexpected
    assert_eq!(report.unexpected().count(), 2);
}

#[test]
fn errata_cells_are_actually_flagged() {
    // an erratum that no longer differs would be stale
    for id in [TableId::T2, TableId::T3, TableId::T4] {
        let report = compare_with_reference(&csv(id), id).unwrap();
        for e in errata().unwrap().iter().filter(|e| e.table == id) {
            let cell = report
                .cells
                .iter()
                .find(|c| c.row == e.row && c.column == e.column)
                .unwrap();
            assert_eq!(cell.status, CellStatus::Flagged, "{e:?}");
        }
    }
}

#[test]
fn common_shock_plateau() {
    let t = generate_table(&TableRequest::reference(TableId::T3)).unwrap();
    let col = t.header.iter().position(|h| h == "ptilde=0.01").unwrap();
    for n in ["50", "100", "1000", "10000"] {
        let row = t.rows.iter().find(|r| r[0] == "TVaR" && r[1] == n).unwrap();
        assert_eq!(row[col], "2.970", "N={n}");
    }
}

#[test]
fn generation_is_deterministic() {
    for id in [TableId::T2, TableId::T3, TableId::T4] {
        assert_eq!(csv(id), csv(id));
    }
}
