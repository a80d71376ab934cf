use gcmt_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Network, NetworkPair};
use gcmt_core::numcore::{squared_distance, Matrix};
use gcmt_core::rng::rng_for;
use gcmt_core::synthdata::{generate_domain, read_dataset, write_dataset, DomainSpec, Split, SplitView};
use gcmt_core::{Error, ParseError};

/// Nearest class mean fitted on `fit`, accuracy on `test`.
fn ncm_accuracy(fit: &SplitView, test: &SplitView, classes: usize) -> f64 {
    let d = fit.features.cols();
    let mut means = Matrix::zeros(classes, d);
    let mut counts = vec![0usize; classes];
    for (row, &id) in fit.features.row_iter().zip(&fit.identities) {
        counts[id] += 1;
        for (m, v) in means.row_mut(id).iter_mut().zip(row) {
            *m += v;
        }
    }
    for c in 0..classes {
        for m in means.row_mut(c) {
            *m /= counts[c].max(1) as f64;
        }
    }
    let correct = test
        .features
        .row_iter()
        .zip(&test.identities)
        .filter(|(row, &id)| {
            let best = (0..classes)
                .min_by(|&a, &b| {
                    squared_distance(row, means.row(a)).total_cmp(&squared_distance(row, means.row(b)))
                })
                .unwrap();
            best == id
        })
        .count();
    correct as f64 / test.features.rows() as f64
}

#[test]
fn classifier_from_one_domain_fails_on_another() {
    let spec_a = DomainSpec {
        identity_count: 50,
        noise_sigma: 0.05,
        eval: true,
        identity_seed: 77,
        ..DomainSpec::desk("a", 1)
    };
    let spec_b = DomainSpec {
        name: "b".into(),
        seed: 2,
        ..spec_a.clone()
    };
    let a = generate_domain(&spec_a).unwrap();
    let b = generate_domain(&spec_b).unwrap();
    let fit = a.split(Split::Train);
    let in_domain = ncm_accuracy(&fit, &a.split(Split::Query), 50);
    let cross = ncm_accuracy(&fit, &b.split(Split::Query), 50);
    assert!(in_domain > 0.9, "{in_domain}");
    assert!(in_domain - cross > 0.5, "in-domain {in_domain}, cross-domain {cross}");
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_domain(&DomainSpec {
        identity_count: 10,
        eval: true,
        ..DomainSpec::desk("target", 4)
    })
    .unwrap();
    let path = dir.path().join("target.csv");
    write_dataset(&ds, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.len(), ds.len());
    for (x, y) in ds.samples.iter().zip(&back.samples) {
        assert_eq!((x.identity, x.camera, x.split), (y.identity, y.camera, y.split));
        for (u, v) in x.vector.iter().zip(&y.vector) {
            assert!((u - v).abs() <= 5e-9 * u.abs());
        }
    }
    match read_dataset(dir.path().join("missing.csv")) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with("missing.csv")),
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, "id,camera,domain,split,x0\n1,0,t,test,0.5\n").unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::Parse(ParseError::SplitTag { line: 2, .. }))));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_for(3, 1);
    let net = Network::random(&[32, 64, 16], 7, &mut rng).unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&Checkpoint::Model(net.clone()), &path).unwrap();
    let back = load_checkpoint(&path).unwrap().into_model();
    for ((_, a), (_, b)) in net.params().into_iter().zip(back.params()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x as f32 as f64, *y);
        }
    }
    let pair = NetworkPair::from_pretrained(&back, 0.999, 4).unwrap();
    save_checkpoint(&Checkpoint::Pair(pair.clone()), &path).unwrap();
    match load_checkpoint(&path).unwrap() {
        Checkpoint::Pair(p) => assert_eq!(p, pair),
        other => panic!("{other:?}"),
    }
}
