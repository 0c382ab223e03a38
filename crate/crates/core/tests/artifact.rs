use bifirom::error::Error;
use bifirom::offline::{build_artifact, OfflineConfig, RomArtifact, StageTimings};
use bifirom::online::{hf_solver, online_solve, relative_error};
use bifirom::store::{self, FORMAT_VERSION};
use proptest::prelude::*;

fn small() -> RomArtifact {
    build_artifact(&OfflineConfig::new("nl-elliptic", (12, 12), (4, 4), 20, 4, 5, 2)).unwrap()
}

/// Offset of the Q payload: it is the first section after the metadata block.
fn q_payload_range(bytes: &[u8], artifact: &RomArtifact) -> std::ops::Range<usize> {
    let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let start = 12 + meta_len + 4 + 1 + 1 + 1 + 2 * 8;
    start..start + 8 * artifact.q.len()
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = small();
    let (p1, p2) = (dir.path().join("a.bfrm"), dir.path().join("b.bfrm"));
    store::save(&a, &p1).unwrap();
    let loaded = store::load(&p1).unwrap();
    store::save(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(loaded.q, a.q);
    assert_eq!(loaded.l_rb_basis, a.l_rb_basis);
    assert_eq!(loaded.meta, a.meta);
}

#[test]
fn loaded_artifact_answers_queries_identically() {
    let a = small();
    let loaded = store::from_bytes(&store::to_bytes(&a).unwrap()).unwrap();
    for mu in &a.gamma_l.points {
        let x = online_solve(&a, mu).unwrap();
        let y = online_solve(&loaded, mu).unwrap();
        assert_eq!(x.u_r, y.u_r);
        assert_eq!(x.a_l, y.a_l);
    }
}

#[test]
fn header_errors() {
    let bytes = store::to_bytes(&small()).unwrap();
    let mut v = bytes.clone();
    v[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(store::from_bytes(&v), Err(Error::Version { .. })));
    let mut m = bytes.clone();
    m[0] = b'X';
    assert!(matches!(store::from_bytes(&m), Err(Error::Format(_))));
    let cut = &bytes[..bytes.len() - 5];
    assert!(matches!(store::from_bytes(cut), Err(Error::Truncated { .. })));
}

#[test]
fn builds_are_deterministic_up_to_timings() {
    let config = OfflineConfig::new("high-contrast", (16, 16), (4, 4), 24, 4, 5, 1);
    let normalize = |mut a: RomArtifact| {
        a.meta.timings = StageTimings::default();
        store::to_bytes(&a).unwrap()
    };
    assert_eq!(normalize(build_artifact(&config).unwrap()), normalize(build_artifact(&config).unwrap()));
}

#[test]
fn single_point_build_reproduces_that_point() {
    let a = build_artifact(&OfflineConfig::new("cubic", (16, 16), (4, 4), 1, 1, 1, 1)).unwrap();
    assert_eq!(a.n_rb(), 1);
    let mu = a.gamma_u.points[0].clone();
    let report = online_solve(&a, &mu).unwrap();
    let u_h = hf_solver(&a).unwrap().solve(&mu).unwrap().solution;
    assert!(relative_error(&report.u_r, &u_h).unwrap() <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_flipped_bit_in_q_is_rejected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let a = small();
        let bytes = store::to_bytes(&a).unwrap();
        let range = q_payload_range(&bytes, &a);
        let at = range.start + pos.index(range.len());
        let mut bad = bytes.clone();
        bad[at] ^= 1 << bit;
        prop_assert!(matches!(store::from_bytes(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn any_flipped_section_byte_is_rejected(pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let bytes = store::to_bytes(&small()).unwrap();
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = 12 + meta_len..bytes.len();
        let at = body.start + pos.index(body.len());
        let mut bad = bytes.clone();
        bad[at] ^= 1 << bit;
        prop_assert!(store::from_bytes(&bad).is_err());
    }
}
