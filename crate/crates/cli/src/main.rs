use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use ffc_core::bitstream::{self, Mode};
use ffc_core::harness::{
    decode_cloud, encode_edge, generate_scene, reconstruct_objects, sweep, write_csv, EncodeConfig,
    GridConfig, SceneSpec,
};
use ffc_core::reconstruct::{read_boxes, write_boxes, write_ply, RefDensifier, ResidualParams};
use ffc_core::voxel::{io as scene_io, SparseTensor};

#[derive(Parser)]
#[command(name = "ffc", version, about = "Sparse voxel feature compression for edge-cloud 3D perception")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Tffc,
    Affc,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tffc => Mode::Tffc,
            ModeArg::Affc => Mode::Affc,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene with ground-truth boxes.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth boxes as JSON.
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
    /// Encode a scene into a frame.
    Encode {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Add the residual channel (default parameters unless the config sets them).
        #[arg(long)]
        residual: bool,
    },
    /// Decode a frame into cloud-side tensors.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build per-object sparse and densified clouds from a residual frame.
    Reconstruct {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a rate-performance sweep and write CSV.
    Sweep {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a frame's header and segment sizes.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

/// Failure classes map onto exit codes.
enum Failure {
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

trait Classify<T> {
    fn data(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

fn harness<T>(r: Result<T, ffc_core::harness::HarnessError>) -> Result<T, Failure> {
    r.map_err(|e| {
        if e.is_data_error() {
            Failure::Data(e.into())
        } else {
            Failure::Internal(e.into())
        }
    })
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let f = File::open(path).with_context(|| format!("opening {}", path.display())).data()?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
        .data()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).with_context(|| format!("reading {}", path.display())).data()
}

/// Creates `path`, runs `body` on a buffered writer and flushes it.
fn save<F>(path: &Path, body: F) -> Result<(), Failure>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    let mut w = File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .internal()?;
    body(&mut w)
        .and_then(|_| Ok(w.flush()?))
        .with_context(|| format!("writing {}", path.display()))
        .internal()
}

/// CSV with `x,y,z,c0..` columns, one row per point.
fn write_tensor(path: &Path, t: &SparseTensor) -> Result<(), Failure> {
    save(path, |w| {
        write!(w, "x,y,z")?;
        for c in 0..t.channels() {
            write!(w, ",c{c}")?;
        }
        writeln!(w)?;
        for i in 0..t.len() {
            let c = t.coords()[i];
            write!(w, "{},{},{}", c[0], c[1], c[2])?;
            for v in t.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Gen { spec, out, boxes } => {
            let spec: SceneSpec = read_json(spec.as_deref())?;
            let (scene, gt) = harness(generate_scene(&spec))?;
            save(&out, |w| Ok(scene_io::write_scene(&scene, w)?))?;
            if let Some(path) = boxes {
                save(&path, |w| Ok(write_boxes(w, &gt.boxes)?))?;
            }
            println!("{} voxels, {} objects -> {}", scene.len(), gt.boxes.len(), out.display());
        }
        Cmd::Encode {
            mode,
            scene,
            params,
            out,
            residual,
        } => {
            let mut cfg: EncodeConfig = read_json(params.as_deref())?;
            cfg.mode = mode.into();
            if residual && cfg.residual.is_none() {
                cfg.residual = Some(ResidualParams::default());
            }
            let scene = scene_io::scene_from_bytes(&read_bytes(&scene)?).data()?;
            let frame = harness(encode_edge(&scene, &cfg))?;
            fs::write(&out, &frame.bytes)
                .with_context(|| format!("writing {}", out.display()))
                .internal()?;
            println!(
                "{} mode, {} of {} pooled points kept, {} bytes -> {}",
                cfg.mode,
                frame.basic.len(),
                frame.compressed.len(),
                frame.bytes.len(),
                out.display()
            );
        }
        Cmd::Decode { input, out } => {
            let dec = harness(decode_cloud(&read_bytes(&input)?))?;
            fs::create_dir_all(&out).internal()?;
            save(&out.join("header.json"), |w| Ok(serde_json::to_writer_pretty(w, &dec.header)?))?;
            write_tensor(&out.join("basic.csv"), &dec.basic)?;
            write_tensor(&out.join("f3d1.csv"), &dec.f3d1)?;
            write_tensor(&out.join("f3d2.csv"), &dec.f3d2)?;
            write_tensor(&out.join("f3d3.csv"), &dec.f3d3)?;
            if let Some(b) = &dec.branch3 {
                write_tensor(&out.join("branch3.csv"), b)?;
            }
            if let Some(b) = &dec.branch4 {
                write_tensor(&out.join("branch4.csv"), b)?;
            }
            if let Some(r) = &dec.residual {
                let doc = json!({
                    "scope": r.scope,
                    "density": r.density,
                    "count": r.flags.count,
                    "positions": r.flags.positions,
                });
                save(&out.join("residual.json"), |w| Ok(serde_json::to_writer(w, &doc)?))?;
            }
            println!("{} basic points -> {}", dec.basic.len(), out.display());
        }
        Cmd::Reconstruct {
            input,
            boxes,
            out,
            seed,
        } => {
            let dec = harness(decode_cloud(&read_bytes(&input)?))?;
            if dec.residual.is_none() {
                return Err(Failure::Data(anyhow!("frame carries no residual segment")));
            }
            let f = File::open(&boxes).with_context(|| format!("opening {}", boxes.display())).data()?;
            let boxes = read_boxes(BufReader::new(f)).data()?;
            let objs = harness(reconstruct_objects(&dec, &boxes, &RefDensifier { seed }, seed))?;
            fs::create_dir_all(&out).internal()?;
            for o in &objs {
                let stem = format!("object{:03}", o.box_index);
                save(&out.join(format!("{stem}_sparse.ply")), |w| Ok(write_ply(w, &o.sparse)?))?;
                save(&out.join(format!("{stem}_dense.ply")), |w| Ok(write_ply(w, &o.dense)?))?;
                println!("{stem} {}: {} sparse, {} dense", o.label, o.sparse.len(), o.dense.len());
            }
        }
        Cmd::Sweep { spec, grid, out } => {
            let spec: SceneSpec = read_json(spec.as_deref())?;
            let grid: GridConfig = read_json(grid.as_deref())?;
            let rows = harness(sweep(&spec, &grid))?;
            save(&out, |w| Ok(write_csv(w, &rows)?))?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            println!("{} rows ({failed} error rows) -> {}", rows.len(), out.display());
        }
        Cmd::Inspect { input } => {
            let frame = bitstream::parse(&read_bytes(&input)?).data()?;
            let h = &frame.header;
            println!("mode          {}", h.mode);
            println!("pool kernel   {}", h.pool_kernel);
            println!("strides       {:?}", h.strides);
            println!("channels      {:?}", h.channels);
            println!("quant step    {}", h.quant_step);
            println!("bbox          {:?}", h.bbox);
            println!("k_th          {}", h.k_th);
            println!("d_p           {}", h.d_p);
            println!("segments      {}", h.segment_count);
            for s in &frame.segments {
                println!("  [{}] {:<10} {} bytes", s.tag.as_u8(), s.tag.name(), s.payload.len());
            }
            println!("total         {} bytes", frame.encoded_len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}
