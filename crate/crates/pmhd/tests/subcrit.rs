use pmhd::config::Experiment;
use pmhd::experiments::{csv_body, preset, run};
use pmhd::subcrit::{subcriticality, System};

#[test]
fn default_verdicts() {
    let cases = [
        (System::Mhd, 2, true),
        (System::Mhd, 3, true),
        (System::Mhd, 4, false),
        (System::HallMhd, 1, true),
        (System::HallMhd, 2, false),
    ];
    for (sys, n, expected) in cases {
        let v = subcriticality(sys, n);
        assert_eq!(v.subcritical, expected, "{sys} N={n}");
        assert_eq!(v.solution, 1.0 - n as f64 / 2.0);
    }
}

#[test]
fn mhd_in_three_dimensions() {
    let v = subcriticality(System::Mhd, 3);
    assert_eq!(v.alpha, -2.5);
    assert_eq!(v.solution, -0.5);
    assert_eq!(v.nonlinearity, -2.0);
    assert_eq!(v.dimension_bound, 4);
    assert!(v.trace.last().unwrap().ends_with("yes"));
}

#[test]
fn system_names_round_trip() {
    for s in [System::Mhd, System::HallMhd] {
        assert_eq!(s.to_string().parse::<System>().unwrap(), s);
    }
    assert!("euler".parse::<System>().is_err());
}

#[test]
fn experiment_table() {
    let out = run(&preset(Experiment::Subcriticality)).unwrap();
    let body = csv_body(&out.artifact("subcriticality.csv").unwrap().body);
    let verdicts: Vec<&str> = body.lines().skip(1).map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(verdicts, ["yes", "yes", "no", "yes", "no"]);
}
