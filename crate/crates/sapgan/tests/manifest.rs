use std::path::Path;

use sapgan::io::{load_image, save_png};
use sapgan::manifest::{build_manifest, DatasetManifest, ManifestOptions, Source, MANIFEST_FILE};
use sapgan_core::image::RawImage;

fn tiny(seed: usize) -> RawImage {
    RawImage::from_fn(8, 8, 3, |x, y, c| ((x * 37 + y * 11 + c * 3 + seed * 7) % 256) as u8).unwrap()
}

fn opts() -> ManifestOptions {
    ManifestOptions { tile: 8, ..ManifestOptions::default() }
}

#[test]
fn museum_counts_add_up_to_2192() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let counts = [("smithsonian", 1301), ("harvard", 101), ("princeton", 362), ("met", 428)];
    for (dir, n) in counts {
        for i in 0..n {
            save_png(&input.path().join(dir).join(format!("{i:04}.png")), &tiny(i)).unwrap();
        }
    }
    let m = build_manifest(input.path(), out.path(), &opts(), None).unwrap();
    assert_eq!(m.records.len(), 2192);
    for (dir, n) in counts {
        assert_eq!(m.counts_by_source[&dir.parse::<Source>().unwrap()], n, "{dir}");
    }
    assert_eq!(m.counts_by_source.values().sum::<usize>(), 2192);

    let reloaded = DatasetManifest::load(&out.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(reloaded, m);
}

#[test]
fn every_listed_file_exists_and_pairs_match() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    save_png(&input.path().join("met/tall.png"), &RawImage::filled(8, 20, 3, 90).unwrap()).unwrap();
    save_png(&input.path().join("harvard/wide.png"), &tiny(1).resize_bilinear(12, 8).unwrap()).unwrap();
    let m = build_manifest(input.path(), out.path(), &opts(), None).unwrap();
    assert_eq!(m.records.len(), 3);
    for r in &m.records {
        let p = load_image(&out.path().join(&r.painting)).unwrap();
        let e = load_image(&out.path().join(&r.edge)).unwrap();
        assert_eq!((p.width(), p.height(), p.channels()), (8, 8, 3));
        assert_eq!((e.width(), e.height(), e.channels()), (8, 8, 1));
    }
    let pairs = m.load_pairs(&out.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(pairs.len(), 3);
}

#[test]
fn same_file_name_in_two_sources_gets_two_ids() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    for dir in ["met", "princeton"] {
        save_png(&input.path().join(dir).join("scroll.png"), &tiny(3)).unwrap();
    }
    let m = build_manifest(input.path(), out.path(), &opts(), None).unwrap();
    let ids: Vec<&str> = m.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["met-scroll-0", "princeton-scroll-0"]);
}

#[test]
fn ppm_input_is_accepted() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut ppm = b"P6\n8 8\n255\n".to_vec();
    ppm.extend(tiny(0).pixels());
    std::fs::create_dir_all(input.path().join("smithsonian")).unwrap();
    std::fs::write(input.path().join("smithsonian/a.ppm"), ppm).unwrap();
    let m = build_manifest(input.path(), out.path(), &opts(), None).unwrap();
    let p = load_image(&out.path().join(&m.records[0].painting)).unwrap();
    assert_eq!(p, tiny(0));
}

#[test]
fn empty_input_is_an_error_and_corrupt_manifest_names_its_path() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert!(build_manifest(input.path(), out.path(), &opts(), None).is_err());

    let bad = out.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let err = DatasetManifest::load(&bad).unwrap_err().to_string();
    assert!(err.contains("bad.json"), "{err}");
    assert!(DatasetManifest::load(Path::new("/nonexistent/m.json"))
        .unwrap_err()
        .to_string()
        .contains("/nonexistent/m.json"));
}
