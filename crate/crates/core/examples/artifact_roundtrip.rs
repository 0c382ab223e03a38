//! Save, reload and tamper with an artifact.

use bifirom::error::Error;
use bifirom::offline::{build_artifact, OfflineConfig};
use bifirom::online::online_solve;
use bifirom::store;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let artifact = build_artifact(&OfflineConfig::new("nl-elliptic", (24, 24), (8, 8), 64, 8, 10, 2))?;
    let bytes = store::to_bytes(&artifact)?;
    let loaded = store::from_bytes(&bytes)?;
    assert_eq!(store::to_bytes(&loaded)?, bytes);
    println!("{} bytes, re-serialization is byte-identical", bytes.len());

    let mu = [0.4, 0.8, 0.3];
    let a = online_solve(&artifact, &mu)?;
    let b = online_solve(&loaded, &mu)?;
    println!("same answer after reload: {}", a.u_r == b.u_r);

    let mut bad = bytes.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0x01;
    match store::from_bytes(&bad) {
        Err(Error::Corrupt(what)) => println!("tampered file rejected: {what}"),
        other => println!("unexpected: {:?}", other.map(|_| ())),
    }
    Ok(())
}
