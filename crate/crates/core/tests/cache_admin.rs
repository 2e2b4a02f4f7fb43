use bmlab::lattice::{enumerate_shell, EnumerationOptions, ShellCache};
use bmlab::{Cutoff, Error, IntegralForm};

#[test]
fn list_verify_purge_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ShellCache::new(dir.path().join("cache"));
    let opts = EnumerationOptions::default();
    assert!(cache.list().unwrap().is_empty());

    let form = IntegralForm::sphere(4);
    let phi = Cutoff::ConstantOne;
    let first = cache.get_or_enumerate(&form, &phi, 2, &opts).unwrap();
    let again = cache.get_or_enumerate(&form, &phi, 2, &opts).unwrap();
    let fresh = enumerate_shell(&form, &phi, 2, &opts).unwrap();
    assert_eq!(first.points, fresh.points);
    assert_eq!(again.points, fresh.points);
    assert_eq!(first.len(), 24);

    let entries = cache.list().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!((entries[0].lambda, entries[0].points), (2, 24));
    assert_eq!(cache.verify(8, 0, &opts).unwrap(), 1);

    assert_eq!(cache.purge().unwrap(), 1);
    assert!(cache.list().unwrap().is_empty());
}

#[test]
fn verify_names_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ShellCache::new(dir.path());
    let opts = EnumerationOptions::default();
    let form = IntegralForm::sphere(3);
    for lambda in [3u64, 5] {
        cache.get_or_enumerate(&form, &Cutoff::ConstantOne, lambda, &opts).unwrap();
    }
    let path = cache.shell_path(&form, &Cutoff::ConstantOne, 5);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    match cache.verify(8, 0, &opts) {
        Err(Error::CacheCorrupt(files)) => assert_eq!(files, vec![path]),
        other => panic!("expected corruption, got {other:?}"),
    }
}
