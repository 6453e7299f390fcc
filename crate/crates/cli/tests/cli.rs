use std::path::{Path, PathBuf};
use std::process::Command;

use densitymap::color::anchor_from_reference;
use densitymap::export::read_grid_csv;
use densitymap::io::read_points_file;
use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

struct Workdir(TempDir);

impl Workdir {
    fn new() -> Self {
        Workdir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.arg(name)
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn manifest(&self, name: &str) -> serde_json::Map<String, Value> {
        match serde_json::from_slice(&self.read(name)).unwrap() {
            Value::Object(m) => m,
            other => panic!("manifest is not an object: {other}"),
        }
    }
}

fn run(args: &[&str]) -> anyhow::Result<()> {
    let mut argv = vec!["densitymap"];
    argv.extend_from_slice(args);
    densitymap_cli::execute_args(argv)
}

fn decode_png(bytes: &[u8]) -> (u32, u32, Vec<u8>) {
    let mut reader = png::Decoder::new(bytes).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    (info.width, info.height, buf)
}

fn pixel(img: &(u32, u32, Vec<u8>), x: u32, y: u32) -> [u8; 4] {
    let k = 4 * (y * img.0 + x) as usize;
    img.2[k..k + 4].try_into().unwrap()
}

#[test]
fn single_point_renders_red_center() {
    let w = Workdir::new();
    let points = w.write("one.csv", "lat,lon,weight\n44.5,4.5,1\n");
    // Peak density is K(0)/h² = 5e-5; an anchor of a fifth of that saturates it.
    run(&[
        "run",
        "--points",
        &points,
        "--bounds",
        "40,50,0,10",
        "--rows",
        "10",
        "--cols",
        "10",
        "--anchor-density",
        "1e-5",
        "--png",
        &w.arg("one.png"),
    ])
    .unwrap();
    let img = decode_png(&w.read("one.png"));
    assert_eq!((img.0, img.1), (10, 10));
    // Cell (5, 5) is image column 4, row 10 - 5 = 5.
    assert_eq!(pixel(&img, 4, 5), [255, 0, 0, 255]);
    let corner = pixel(&img, 0, 0);
    assert_ne!(corner, [255, 0, 0, 255]);
    assert!(
        corner[1] > 0,
        "corner {corner:?} should be paler than the center"
    );
}

#[test]
fn stages_chain_to_the_same_artifacts_as_run() {
    let w = Workdir::new();
    let (pubs, gaz) = (data("pubs.csv"), data("gazetteer.csv"));
    let common = [
        "--gazetteer",
        &gaz,
        "--percentile",
        "100",
        "--rows",
        "60",
        "--cols",
        "90",
        "--anchor-density",
        "1e-4",
    ];
    let mut geocode = vec!["geocode", "--pubs", &pubs, "--out-points", "PLACEHOLDER"];
    let pts = w.arg("points.csv");
    geocode[4] = &pts;
    geocode.extend_from_slice(&common);
    run(&geocode).unwrap();

    let grid = w.arg("grid.csv");
    let mut density = vec!["density", "--points", &pts, "--grid", &grid];
    density.extend_from_slice(&common[2..]);
    run(&density).unwrap();

    let (png, kmz) = (w.arg("staged.png"), w.arg("staged.kmz"));
    let mut render = vec!["render", "--grid", &grid, "--png", &png, "--kmz", &kmz];
    render.extend_from_slice(&common[6..]);
    run(&render).unwrap();

    let (png2, kmz2, grid2) = (w.arg("run.png"), w.arg("run.kmz"), w.arg("run.csv"));
    let mut all = vec![
        "run", "--pubs", &pubs, "--png", &png2, "--kmz", &kmz2, "--grid", &grid2,
    ];
    all.extend_from_slice(&common);
    run(&all).unwrap();

    assert_eq!(w.read("grid.csv"), w.read("run.csv"));
    assert_eq!(w.read("staged.png"), w.read("run.png"));
    assert_eq!(w.read("staged.kmz"), w.read("run.kmz"));
}

#[test]
fn manifest_records_points_and_is_stable() {
    let w = Workdir::new();
    let (pubs, gaz) = (data("pubs.csv"), data("gazetteer.csv"));
    for tag in ["a", "b"] {
        let (png, pts, man) = (
            w.arg(&format!("{tag}.png")),
            w.arg(&format!("{tag}.pts")),
            w.arg(&format!("{tag}.json")),
        );
        run(&[
            "run",
            "--pubs",
            &pubs,
            "--gazetteer",
            &gaz,
            "--percentile",
            "60",
            "--counting",
            "fractional",
            "--rows",
            "20",
            "--cols",
            "40",
            "--anchor-density",
            "1e-4",
            "--png",
            &png,
            "--out-points",
            &pts,
            "--manifest",
            &man,
        ])
        .unwrap();
    }
    let mut a = w.manifest("a.json");
    let points = read_points_file(&w.path("a.pts")).unwrap();
    assert_eq!(a["m"].as_u64(), Some(points.len() as u64));
    let total: f64 = points.iter().map(|p| p.weight()).sum();
    assert_eq!(a["total_weight"].as_f64(), Some(total));
    // Four selected records, fractional counting: total weight four.
    assert!((total - 4.0).abs() < 1e-12);
    assert_eq!(a["anchor_g"].as_f64(), Some(1e-4));
    assert_eq!(a["counting"], "fractional");
    assert_eq!(a["records_selected"].as_u64(), Some(4));
    assert_eq!(a["input_sha256"].as_str().map(str::len), Some(64));
    assert!(a["created_unix"].as_u64().is_some());

    let mut b = w.manifest("b.json");
    for m in [&mut a, &mut b] {
        m.remove("created_unix");
        for key in ["output_png", "output_points"] {
            m.remove(key);
        }
    }
    assert_eq!(a, b);
}

#[test]
fn default_manifest_sits_next_to_first_output() {
    let w = Workdir::new();
    run(&[
        "density",
        "--points",
        &data("europe_points.csv"),
        "--rows",
        "10",
        "--cols",
        "20",
        "--grid",
        &w.arg("g.csv"),
    ])
    .unwrap();
    let m = w.manifest("g.csv.manifest.json");
    assert_eq!(m["command"], "density");
    assert_eq!(m["m"].as_u64(), Some(500));
    assert_eq!(m["rows"].as_u64(), Some(10));
}

fn unresolved_run(w: &Workdir, extra: &[&str]) -> anyhow::Result<()> {
    let mut args = vec![
        "run",
        "--pubs",
        "PUBS",
        "--gazetteer",
        "GAZ",
        "--percentile",
        "100",
        "--rows",
        "10",
        "--cols",
        "10",
        "--grid",
        "GRID",
        "--rejects",
        "REJECTS",
    ];
    let (pubs, gaz, grid, rejects) = (
        data("pubs.csv"),
        data("gazetteer.csv"),
        w.arg("g.csv"),
        w.arg("rejects.csv"),
    );
    args[2] = &pubs;
    args[4] = &gaz;
    args[12] = &grid;
    args[14] = &rejects;
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn unresolved_share_warns_or_fails_when_strict() {
    let w = Workdir::new();
    // "Atlantis" carries 1 of 9 occurrences, above the 5% default limit.
    unresolved_run(&w, &[]).unwrap();
    let rejects = String::from_utf8(w.read("rejects.csv")).unwrap();
    assert!(rejects.contains("city,,atlantis,1,"), "{rejects}");

    let err = unresolved_run(&w, &["--strict"]).unwrap_err();
    assert!(err.to_string().contains("could not be placed"), "{err}");
    assert!(err.downcast_ref::<densitymap_cli::UsageError>().is_none());

    unresolved_run(&w, &["--strict", "--max-unresolved", "0.2"]).unwrap();
}

#[test]
fn geocoder_cache_fills_gazetteer_gaps() {
    let w = Workdir::new();
    let cache = w.write(
        "cache.csv",
        "city_key,lat,lon,source,timestamp\natlantis,36.4,25.4,manual,0\n",
    );
    unresolved_run(&w, &["--strict", "--geocoder-cache", &cache]).unwrap();
    let rejects = String::from_utf8(w.read("rejects.csv")).unwrap();
    assert_eq!(rejects.trim(), "kind,pub_id,city_key,weight,reason");
}

#[test]
fn anchor_from_reference_raster() {
    let w = Workdir::new();
    let points = data("europe_points.csv");
    let base = ["--points", &points, "--rows", "30", "--cols", "60"];
    let grid = w.arg("ref.csv");
    let mut density = vec!["density", "--grid", &grid];
    density.extend_from_slice(&base);
    run(&density).unwrap();

    let table = read_grid_csv(w.read("ref.csv").as_slice()).unwrap();
    let g = anchor_from_reference(&table.densities()).unwrap();

    let (a, b) = (w.arg("from.png"), w.arg("explicit.png"));
    let mut from = vec!["run", "--anchor-from", &grid, "--png", &a];
    from.extend_from_slice(&base);
    run(&from).unwrap();
    let g_text = format!("{g:e}");
    let mut explicit = vec!["run", "--anchor-density", &g_text, "--png", &b];
    explicit.extend_from_slice(&base);
    run(&explicit).unwrap();

    assert_eq!(w.read("from.png"), w.read("explicit.png"));
    assert_eq!(
        w.manifest("from.png.manifest.json")["anchor_g"].as_f64(),
        Some(g)
    );
}

#[test]
fn render_checks_grid_against_bounds() {
    let w = Workdir::new();
    let grid = w.arg("g.csv");
    run(&[
        "density",
        "--points",
        &data("europe_points.csv"),
        "--rows",
        "8",
        "--cols",
        "8",
        "--grid",
        &grid,
    ])
    .unwrap();
    let png = w.arg("x.png");
    run(&[
        "render",
        "--grid",
        &grid,
        "--anchor-density",
        "1e-4",
        "--png",
        &png,
    ])
    .unwrap();
    let err = run(&[
        "render",
        "--grid",
        &grid,
        "--bounds",
        "30,72,-25,45",
        "--anchor-density",
        "1e-4",
        "--png",
        &png,
    ])
    .unwrap_err();
    assert!(format!("{err:#}").contains("does not match"), "{err:#}");
}

#[test]
fn overlay_and_borders_change_the_png_only_where_drawn() {
    let w = Workdir::new();
    let points = w.write("p.csv", "lat,lon,weight\n50,10,1\n");
    let borders = w.write(
        "b.geojson",
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","geometry":
            {"type":"LineString","coordinates":[[0,45],[20,45]]}}]}"#,
    );
    let base = [
        "run",
        "--points",
        &points,
        "--bounds",
        "40,60,0,20",
        "--rows",
        "40",
        "--cols",
        "40",
        "--anchor-density",
        "1e-3",
    ];
    let plain = w.arg("plain.png");
    let mut args = base.to_vec();
    args.extend_from_slice(&["--png", &plain]);
    run(&args).unwrap();
    let decorated = w.arg("decorated.png");
    let mut args = base.to_vec();
    args.extend_from_slice(&[
        "--png",
        &decorated,
        "--points-overlay",
        "--borders",
        &borders,
    ]);
    run(&args).unwrap();

    let a = decode_png(&w.read("plain.png"));
    let b = decode_png(&w.read("decorated.png"));
    let changed: Vec<(u32, u32)> = (0..40)
        .flat_map(|y| (0..40).map(move |x| (x, y)))
        .filter(|&(x, y)| pixel(&a, x, y) != pixel(&b, x, y))
        .collect();
    assert!(!changed.is_empty());
    // Latitude 45 is image row 30; the point sits at (20, 20).
    for (x, y) in changed {
        let near_point = x.abs_diff(20) <= 2 && y.abs_diff(20) <= 2;
        assert!(
            y == 30 || y == 29 || near_point,
            "unexpected change at ({x}, {y})"
        );
    }
}

#[test]
fn config_file_supplies_defaults() {
    let w = Workdir::new();
    let grid = w.arg("cfg.csv");
    let config = w.write(
        "run.toml",
        &format!(
            "points = {:?}\nrows = 6\ncols = 12\nkernel = \"gauss\"\nwidth_km = 250.0\ngrid = {grid:?}\n",
            data("europe_points.csv")
        ),
    );
    run(&["density", "--config", &config]).unwrap();
    let table = read_grid_csv(w.read("cfg.csv").as_slice()).unwrap();
    assert_eq!((table.rows, table.cols), (6, 12));
    let m = w.manifest("cfg.csv.manifest.json");
    assert_eq!(m["kernel"], "gauss");
    assert_eq!(m["width_km"].as_f64(), Some(250.0));
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_densitymap"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn exit_codes() {
    let w = Workdir::new();
    let png = w.arg("x.png");
    let points = data("europe_points.csv");

    let missing_input = binary(&["run", "--png", &png, "--anchor-density", "1e-4"]);
    assert_eq!(missing_input.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_input.stderr).contains("--points or --pubs"));

    let missing_anchor = binary(&["run", "--points", &points, "--png", &png]);
    assert_eq!(missing_anchor.status.code(), Some(2));
    assert!(!w.path("x.png").exists(), "no work before validation");

    let both_anchors = binary(&[
        "run",
        "--points",
        &points,
        "--png",
        &png,
        "--anchor-density",
        "1",
        "--anchor-from",
        "r.csv",
    ]);
    assert_eq!(both_anchors.status.code(), Some(2));

    let unreadable = binary(&[
        "density",
        "--points",
        "/nonexistent/p.csv",
        "--grid",
        &w.arg("g.csv"),
    ]);
    assert_eq!(unreadable.status.code(), Some(1));

    let ok = binary(&[
        "run",
        "--points",
        &points,
        "--rows",
        "5",
        "--cols",
        "5",
        "--grid",
        &w.arg("g.csv"),
    ]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(binary(&["--help"]).status.success());
}
