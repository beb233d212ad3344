use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hrtf_core::cvae::{SubjectSlot, TrainConfig};
use hrtf_core::dataset::Region;

#[derive(Parser, Debug)]
#[command(name = "hrtfkit", version, about = "Personalised HRTF toolkit: synthesis, training, measurement, localization")]
pub struct Cli {
    /// Directory for manifests and metrics.
    #[arg(long, global = true, env = "HRTFKIT_OUT", default_value = "hrtfkit-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Stem of the manifest and metrics files; defaults to the command name.
    #[arg(long, global = true)]
    pub run_name: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train the generative model on the first subjects of a bundle.
    Train(TrainArgs),
    /// Simulate a phone measurement session for one subject.
    Simulate(SimulateArgs),
    /// Run the quality checks on a recorded session.
    Qc(QcArgs),
    /// Adapt a trained model to a new subject from sparse measurements.
    Individualize(IndividualizeArgs),
    /// Log-spectral distortion of generated or stored HRTFs against a subject.
    EvalLsd(EvalLsdArgs),
    /// Individualization over grids of measurement counts, regions and coverage.
    Sweep(SweepArgs),
    /// Train or adapt an azimuth localizer.
    LocTrain(LocTrainArgs),
    /// Evaluate a localizer on a subject's HRTFs.
    LocEval(LocEvalArgs),
    /// Render a stimulus at a grid of positions into stereo WAV files.
    Spatialize(SpatializeArgs),
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Write a bundle of random synthetic subjects.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 9)]
    pub subjects: usize,
    #[arg(long, default_value_t = 44_100.0)]
    pub sample_rate: f64,
    /// Bundle file; subject models go next to it with a `.models` suffix.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub replay_fraction: Option<f64>,
    #[arg(long)]
    pub adaptation_iterations: Option<usize>,
    #[arg(long)]
    pub adaptation_lr: Option<f64>,
    #[arg(long)]
    pub new_subject_weight: Option<f64>,
}

impl TrainOverrides {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            iterations: self.iterations.unwrap_or(d.iterations),
            beta: self.beta.unwrap_or(d.beta),
            replay_fraction: self.replay_fraction.unwrap_or(d.replay_fraction),
            adaptation_iterations: self.adaptation_iterations.unwrap_or(d.adaptation_iterations),
            adaptation_lr: self.adaptation_lr.unwrap_or(d.adaptation_lr),
            new_subject_weight: self.new_subject_weight.unwrap_or(d.new_subject_weight),
            seed,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Number of leading subjects to train on; the rest are held out.
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// 80 stops over four rows.
    Frontal,
    /// 238 stops over seven rows.
    Calibration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Hands {
    Both,
    Left,
    Right,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub subject: usize,
    /// Session directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Layout::Frontal)]
    pub layout: Layout,
    #[arg(long, value_enum, default_value_t = Hands::Both)]
    pub hands: Hands,
    /// Degrees of orientation noise on the reported pose.
    #[arg(long, default_value_t = 0.0)]
    pub imu_sigma: f64,
    /// Microphone SNR in dB; `inf` for none.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub mic_snr: f64,
    /// Degrees of jitter between the intended and actual phone pose.
    #[arg(long, default_value_t = 0.0)]
    pub pose_jitter: f64,
    /// Shoulder half-width, arm length and shoulder drop in metres.
    #[arg(long, default_value_t = 0.19)]
    pub l_sh: f64,
    #[arg(long, default_value_t = 0.62)]
    pub l_s: f64,
    #[arg(long, default_value_t = 0.2)]
    pub l_z: f64,
    /// Direction the user faces in the phone's frame, degrees.
    #[arg(long, default_value_t = 25.0)]
    pub alpha: f64,
    /// Seconds per stop; defaults to the sweep length plus settle time.
    #[arg(long)]
    pub dwell: Option<f64>,
    /// Stops cut short mid-sweep, as when the user moves too early.
    #[arg(long, value_delimiter = ',')]
    pub truncate_stops: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct QcArgs {
    #[arg(long)]
    pub session: PathBuf,
}

pub fn parse_region(s: &str) -> Result<Region, String> {
    match s {
        "full" => Ok(Region::FullSphere),
        "frontal" => Ok(Region::FrontalSemisphere),
        _ => {
            let phi = s
                .strip_prefix("az:")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format!("region `{s}`: expected full, frontal or az:<degrees>"))?;
            if !(phi > 0.0 && phi <= 360.0) {
                return Err(format!("coverage {phi} outside (0, 360]"));
            }
            Ok(Region::AzimuthRange(phi))
        }
    }
}

pub fn region_label(r: Region) -> String {
    match r {
        Region::FullSphere => "full".into(),
        Region::FrontalSemisphere => "frontal".into(),
        Region::AzimuthRange(phi) => format!("az:{phi}"),
    }
}

pub fn parse_slot(s: &str) -> Result<SubjectSlot, String> {
    if s == "reserved" {
        return Ok(SubjectSlot::Reserved);
    }
    s.parse::<usize>()
        .map(SubjectSlot::Train)
        .map_err(|_| format!("slot `{s}`: expected `reserved` or a roster position"))
}

pub fn slot_label(s: SubjectSlot) -> String {
    match s {
        SubjectSlot::Reserved => "reserved".into(),
        SubjectSlot::Train(i) => i.to_string(),
    }
}

#[derive(Args, Debug)]
pub struct IndividualizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Bundle holding the training subjects, used for replay.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Measurement session of the new subject.
    #[arg(long, conflicts_with = "subject")]
    pub session: Option<PathBuf>,
    /// Take sparse measurements from this bundle subject instead of a session.
    #[arg(long)]
    pub subject: Option<usize>,
    #[arg(long, default_value_t = 70)]
    pub count: usize,
    #[arg(long, value_parser = parse_region, default_value = "full")]
    pub region: Region,
    /// Report LSD of the reserved slot against this bundle subject.
    #[arg(long)]
    pub eval_subject: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args, Debug)]
pub struct EvalLsdArgs {
    /// Bundle holding the reference subject.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub subject: usize,
    #[arg(long, conflicts_with = "generated")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_slot, default_value = "reserved")]
    pub slot: SubjectSlot,
    /// Compare a stored bundle subject instead of model output.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub generated_subject: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    /// Held-out subject that plays the new user.
    #[arg(long)]
    pub subject: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,30,70,150")]
    pub counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_region, default_value = "full,frontal")]
    pub regions: Vec<Region>,
    /// Azimuth coverage angles, each run at `--coverage-count` measurements.
    #[arg(long, value_delimiter = ',')]
    pub coverage: Vec<f64>,
    #[arg(long, default_value_t = 70)]
    pub coverage_count: usize,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args, Debug, Clone)]
pub struct RingArgs {
    /// Elevation rows of the grid to render.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub elevations: Vec<f64>,
    /// Stimuli rendered per direction.
    #[arg(long, default_value_t = 4)]
    pub per_direction: usize,
}

#[derive(Args, Debug)]
pub struct LocTrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Bundle subjects whose stored HRIRs make the corpus.
    #[arg(long, value_delimiter = ',')]
    pub subjects: Vec<usize>,
    /// Build the corpus from model output instead.
    #[arg(long, conflicts_with = "subjects")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_slot, default_value = "reserved")]
    pub slot: SubjectSlot,
    /// Session whose measured ITDs scale the generated ITDs.
    #[arg(long)]
    pub session: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0, conflicts_with = "session")]
    pub itd_factor: f64,
    /// Localizer to fine-tune instead of training from scratch.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub ring: RingArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct LocEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub subject: usize,
    #[command(flatten)]
    pub ring: RingArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StimulusKind {
    Noise,
    Speech,
}

#[derive(Args, Debug)]
pub struct SpatializeArgs {
    /// Bundle for the ITD table, or the HRIRs themselves with `--subject`.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, conflicts_with = "subject")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_slot, default_value = "reserved")]
    pub slot: SubjectSlot,
    #[arg(long)]
    pub subject: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub itd_factor: f64,
    #[arg(long, default_value_t = 12)]
    pub azimuths: usize,
    #[arg(long, default_value_t = 2)]
    pub elevations: usize,
    /// Lowest and highest elevation, degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 30.0])]
    pub elevation_range: Vec<f64>,
    #[arg(long, value_enum, default_value_t = StimulusKind::Noise)]
    pub stimulus: StimulusKind,
    /// Stimulus length in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub duration: f64,
    /// Directory for the WAV files.
    #[arg(long)]
    pub output: PathBuf,
}
