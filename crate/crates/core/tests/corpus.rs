//! The files under `corpus/` are the built-in corpus, byte for byte in meaning.

use std::path::PathBuf;

use opal::grammar::{corpus as gc, Grammar};
use opal::opm::{corpus as mc, OpMatrix};

fn read(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "corpus", name].iter().collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn grammar_files_match() {
    let files = [
        ("gae.g", gc::g_ae()),
        ("gc.g", gc::g_c()),
        ("gnc.g", gc::g_nc()),
        ("gnoop.g", gc::g_noop()),
        ("gnl.g", gc::g_nl()),
        ("aadbc.g", gc::g_aadbc()),
        ("paired2.g", gc::g_paired2()),
        ("six.g", gc::g_six()),
        ("cross.g", gc::g_cross()),
        ("pipe.g", gc::g_pipe()),
    ];
    for (file, want) in files {
        assert_eq!(Grammar::parse(&read(file)).unwrap(), want, "{file}");
    }
}

#[test]
fn matrix_files_match() {
    let files = [
        ("gae.opm", mc::m_ae()),
        ("dyck.opm", mc::m_dyck()),
        ("dyck_complete.opm", mc::m_complete()),
        ("int.opm", mc::m_int()),
        ("cab.opm", mc::m_cab()),
        ("abc.opm", mc::m_abc()),
    ];
    for (file, want) in files {
        assert_eq!(OpMatrix::from_table(&read(file)).unwrap(), want, "{file}");
    }
}

#[test]
fn concatenation_grammars_compose() {
    let (l1, l2, l12) = (read("l1.g"), read("l2.g"), read("l1l2.g"));
    let (l1, l2, l12) = (Grammar::parse(&l1).unwrap(), Grammar::parse(&l2).unwrap(), Grammar::parse(&l12).unwrap());
    // L1·L2 keeps every rule of L1; W -> a becomes W -> S a
    for p in &l1.productions {
        assert!(l12.productions.contains(p), "{p:?}");
    }
    assert_eq!(l12.productions.len(), l1.productions.len() + l2.productions.len());
}
