mod common;

use metaprop::data::{Study, Trial};
use metaprop::multilevel::reml_fit;
use metaprop::regression::{encode_features, forward_select, permutation_importance, FeatureSpec, PfiOptions, SelectionOptions};
use metaprop::reporting::{
    forest_plot, funnel_plot, importance_plot, regression_plot, selection_plot, summary_table, AxisPolicy, PlotKind,
    PlotSpec, SummaryTable,
};
use metaprop::transforms::ProportionOutcome;
use metaprop::{Dataset, FeatureMatrix};

fn well_formed(svg: &str) -> roxmltree::Document<'_> {
    let doc = roxmltree::Document::parse(svg).expect("SVG parses as XML");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    doc
}

fn elements<'a>(doc: &'a roxmltree::Document, class: &str) -> Vec<roxmltree::Node<'a, 'a>> {
    doc.descendants().filter(|n| n.attribute("class") == Some(class)).collect()
}

fn attr(node: &roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

fn null_fit(ds: &Dataset) -> metaprop::multilevel::FitResult {
    reml_fit(ds, &FeatureMatrix::intercept_only(ds.num_trials())).unwrap()
}

#[test]
fn forest_has_one_row_per_study_plus_population() {
    let ds = common::simulate(&common::plain(20, 3));
    let fit = null_fit(&ds);
    let spec = PlotSpec::new(PlotKind::Forest);
    let plot = forest_plot(&fit, &ds, &spec).unwrap();
    let doc = well_formed(&plot.svg);
    let squares = elements(&doc, "study");
    assert_eq!(squares.len(), 20);
    assert_eq!(elements(&doc, "population").len(), 1);
    assert_eq!(plot.sidecar.data.rows.len(), 20);

    let data = &plot.sidecar.data;
    for (row, rect) in data.rows.iter().zip(&squares) {
        assert!((0.0..=1.0).contains(&row.lcb) && row.lcb <= row.estimate && row.estimate <= row.ucb && row.ucb <= 1.0);
        let x = data.x_scale.map(row.estimate) - row.size / 2.0;
        assert!((attr(rect, "x") - x).abs() <= 0.005 + 1e-9);
        assert!((attr(rect, "width") - row.size).abs() <= 0.005 + 1e-9);
    }
    let max_trials = data.rows.iter().map(|r| r.trials).max().unwrap();
    let biggest = data.rows.iter().find(|r| r.trials == max_trials).unwrap();
    assert!(data.rows.iter().all(|r| r.size <= biggest.size + 1e-12));

    let pop = &data.population;
    let line = &elements(&doc, "population-line")[0];
    assert!((attr(line, "x1") - data.x_scale.map(pop.estimate)).abs() <= 0.005 + 1e-9);
    assert_eq!(forest_plot(&fit, &ds, &spec).unwrap(), plot);
}

#[test]
fn forest_survives_zero_variance_fit() {
    let studies = (0..4)
        .map(|j| {
            let trials = (0..3)
                .map(|i| Trial::new(format!("t{i}"), ProportionOutcome::new(90, 100).unwrap()))
                .collect();
            Study::new(format!("s{j}"), trials)
        })
        .collect();
    let ds = Dataset::new(studies).unwrap();
    let fit = null_fit(&ds);
    assert_eq!(fit.components.sigma2_xi, 0.0);
    let plot = forest_plot(&fit, &ds, &PlotSpec::new(PlotKind::Forest)).unwrap();
    well_formed(&plot.svg);
    for r in &plot.sidecar.data.rows {
        assert!((r.estimate - plot.sidecar.data.rows[0].estimate).abs() < 1e-12);
    }
}

#[test]
fn funnel_wedges_nest_and_points_are_covered() {
    let mut inside = Vec::new();
    for seed in 0..20 {
        let ds = common::simulate(&common::plain(20, 100 + seed));
        let fit = null_fit(&ds);
        let plot = funnel_plot(&fit, &ds, &PlotSpec::new(PlotKind::Funnel)).unwrap();
        let data = &plot.sidecar.data;
        let doc = well_formed(&plot.svg);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), ds.num_trials());

        for v in &data.dark_wedge {
            let light_half = data.t_critical * (data.heterogeneity + v[1] * v[1]).sqrt();
            assert!((v[0] - data.mu).abs() <= light_half + 1e-12);
        }
        let mu_line = &elements(&doc, "mu-line")[0];
        assert!((attr(mu_line, "x1") - data.x_scale.map(fit.mu)).abs() <= 0.005 + 1e-9);
        let recount = data.points.iter().filter(|p| p.inside_light).count() as f64 / data.points.len() as f64;
        assert_eq!(recount, data.fraction_inside_light);
        inside.push(data.fraction_inside_light);
    }
    let mean = inside.iter().sum::<f64>() / inside.len() as f64;
    assert!(mean >= 0.93, "mean share inside light wedge {mean}");
}

#[test]
fn regression_plot_tracks_positive_slope() {
    let ds = common::simulate(&common::maxprev_driven(20, 11));
    let specs = [FeatureSpec::numeric("maxprev")];
    let x = encode_features(&ds, &specs, &["maxprev".into()]).unwrap();
    let fit = reml_fit(&ds, &x).unwrap();
    assert!(fit.beta[1] > 0.0);
    let spec = PlotSpec::new(PlotKind::Regression);
    let plot = regression_plot(&fit, &ds, "maxprev", &spec).unwrap();
    well_formed(&plot.svg);
    let curve = &plot.sidecar.data.curve;
    assert!(curve.windows(2).all(|w| w[1].estimate >= w[0].estimate));
    for c in curve {
        assert!(0.0 <= c.lcb && c.lcb <= c.estimate && c.estimate <= c.ucb && c.ucb <= 1.0);
    }
    let y = plot.sidecar.data.y_scale;
    assert!(y.domain[0] > 0.0, "proportion axis should not start at zero: {:?}", y.domain);
    let unit = regression_plot(&fit, &ds, "maxprev", &spec.with_axis(AxisPolicy::Unit)).unwrap();
    assert_eq!(unit.sidecar.data.y_scale.domain, [0.0, 1.0]);

    assert!(regression_plot(&fit, &ds, "resolution", &spec).is_err());
    assert!(regression_plot(&null_fit(&ds), &ds, "maxprev", &spec).is_err());
}

#[test]
fn regression_band_narrows_with_more_studies() {
    let specs = [FeatureSpec::numeric("maxprev")];
    let width = |h: usize| {
        let ds = common::simulate(&common::maxprev_driven(h, 5));
        let x = encode_features(&ds, &specs, &["maxprev".into()]).unwrap();
        let fit = reml_fit(&ds, &x).unwrap();
        let plot = regression_plot(&fit, &ds, "maxprev", &PlotSpec::new(PlotKind::Regression)).unwrap();
        let c = &plot.sidecar.data.curve;
        c.iter().map(|p| p.ucb - p.lcb).sum::<f64>() / c.len() as f64
    };
    let (small, large) = (width(20), width(200));
    assert!(large < small, "band {large} at h=200 vs {small} at h=20");
}

#[test]
fn selection_and_importance_plots() {
    let ds = common::simulate(&common::maxprev_driven(20, 21));
    let specs = vec![FeatureSpec::numeric("maxprev")];
    let path = forward_select(&ds, &specs, SelectionOptions::default()).unwrap();
    let plot = selection_plot(&path, &PlotSpec::new(PlotKind::Selection)).unwrap();
    let doc = well_formed(&plot.svg);
    let evaluated = 1 + path.steps.iter().map(|s| s.candidates.len()).sum::<usize>();
    assert_eq!(plot.sidecar.data.rows.len(), evaluated);
    assert_eq!(plot.sidecar.data.panels.len(), 3);
    assert_eq!(elements(&doc, "null-line").len(), 3);
    let sorted: Vec<f64> = plot.sidecar.data.rows.iter().map(|r| r.aic).collect();
    assert!(sorted.windows(2).all(|w| w[0] <= w[1]));

    let report = permutation_importance(
        &ds,
        &specs,
        &["maxprev".into()],
        PfiOptions {
            permutations: 20,
            ..PfiOptions::default()
        },
    )
    .unwrap();
    let plot = importance_plot(&report, &PlotSpec::new(PlotKind::Importance)).unwrap();
    let doc = well_formed(&plot.svg);
    assert_eq!(elements(&doc, "mean").len(), 1);
    assert_eq!(plot.sidecar.data.replicates_per_feature, 100);
}

#[test]
fn summary_table_mirrors_the_model_comparison() {
    let ds = common::simulate(&common::maxprev_driven(20, 8));
    let specs = [FeatureSpec::numeric("maxprev")];
    let null = null_fit(&ds);
    let x = encode_features(&ds, &specs, &["maxprev".into()]).unwrap();
    let reg = reml_fit(&ds, &x).unwrap();
    let table = summary_table(&ds, &null, Some(&reg), 0.05).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    let m = ds.num_trials();
    assert_eq!(
        labels,
        [
            "Q",
            "df",
            "σ²_ξ (h = 20)",
            &format!("σ²_ζ (m = {m})"),
            "σ²_ε",
            "R²_ξ",
            "R²_ζ",
            "μ (SE)",
            "β(maxprev) (SE)",
            "p̄ [95% CI]",
        ]
    );
    assert_eq!(table.columns[0].df, m - 1);
    assert_eq!(table.columns[1].df, m - 2);
    assert_eq!(table.rows[1].cells, [(m - 1).to_string(), (m - 2).to_string()]);
    assert!(table.columns[1].r_squared.is_some());
    assert_eq!(SummaryTable::from_json(&table.to_json()).unwrap(), table);
    let text = table.to_text();
    assert!(text.contains("Meta-regression") && text.contains("β(maxprev) (SE)"));

    let solo = summary_table(&ds, &null, None, 0.05).unwrap();
    assert_eq!(solo.columns.len(), 1);
    assert!(summary_table(&ds, &reg, None, 0.05).is_err());
}
