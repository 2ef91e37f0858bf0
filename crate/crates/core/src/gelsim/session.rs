use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, PixelScale, Wrench};
use crate::io;

use super::{add_noise, flow, indent, penetration, render, synthesize_wrench};
use super::{ContactState, GelSpec, HeightField};

/// One continuous contact sequence of a single object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Index into the session's object list.
    pub object: usize,
    pub steps: Vec<ContactState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    /// Standard deviation of additive pixel noise; 0 disables it.
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { session_id: "session-0".into(), noise_std: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub trajectory: usize,
    pub step: usize,
    pub tactile: GrayImage,
    pub wrench: Wrench,
    pub object_id: String,
    pub contact: ContactState,
}

/// Lazily simulated frame stream; see [`simulate_session`].
pub struct Session<'a> {
    gel: GelSpec,
    objects: &'a [HeightField],
    schedule: &'a [Trajectory],
    reference: &'a GrayImage,
    scale: PixelScale,
    noise_std: f64,
    session_id: String,
    rng: ChaCha8Rng,
    trajectory: usize,
    step: usize,
    index: usize,
}

/// Renders every step of every trajectory in order:
/// indent, flow, render (plus optional noise), and the wrench of the same
/// state.
pub fn simulate_session<'a>(
    gel: &GelSpec,
    objects: &'a [HeightField],
    schedule: &'a [Trajectory],
    reference: &'a GrayImage,
    scale: PixelScale,
    config: &SessionConfig,
) -> Session<'a> {
    Session {
        gel: *gel,
        objects,
        schedule,
        reference,
        scale,
        noise_std: config.noise_std,
        session_id: config.session_id.clone(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        trajectory: 0,
        step: 0,
        index: 0,
    }
}

/// Clean tactile frame and wrench for one contact state.
pub fn simulate_frame(
    gel: &GelSpec,
    obj: &HeightField,
    contact: &ContactState,
    reference: &GrayImage,
    scale: PixelScale,
) -> Result<(GrayImage, Wrench)> {
    let pre = indent(gel, obj, contact, scale, reference.dims())?;
    let wrench = synthesize_wrench(&penetration(&pre, gel), gel, contact, scale);
    let post = flow(&pre, gel, contact, scale);
    Ok((render(&post, reference, gel)?, wrench))
}

impl<'a> Session<'a> {
    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn reference(&self) -> &'a GrayImage {
        self.reference
    }

    /// Wrench labels of the whole schedule without rendering.
    pub fn wrenches(&self) -> Result<Vec<Wrench>> {
        let mut out = Vec::new();
        for traj in self.schedule {
            let obj = self.object(traj)?;
            for c in &traj.steps {
                let pre = indent(&self.gel, obj, c, self.scale, self.reference.dims())?;
                out.push(synthesize_wrench(&penetration(&pre, &self.gel), &self.gel, c, self.scale));
            }
        }
        Ok(out)
    }

    fn object(&self, traj: &Trajectory) -> Result<&'a HeightField> {
        let objects: &'a [HeightField] = self.objects;
        objects.get(traj.object).ok_or_else(|| {
            Error::Parameter(format!("trajectory refers to missing object {}", traj.object))
        })
    }

    fn produce(&mut self, t: usize, s: usize) -> Result<Frame> {
        let schedule: &'a [Trajectory] = self.schedule;
        let traj = &schedule[t];
        let obj = self.object(traj)?;
        let contact = traj.steps[s];
        let (mut tactile, wrench) =
            simulate_frame(&self.gel, obj, &contact, self.reference, self.scale)?;
        if self.noise_std > 0.0 {
            tactile = add_noise(&tactile, self.noise_std, &mut self.rng)?;
        }
        Ok(Frame {
            index: self.index,
            trajectory: t,
            step: s,
            tactile,
            wrench,
            object_id: obj.id().to_string(),
            contact,
        })
    }
}

impl Iterator for Session<'_> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.trajectory < self.schedule.len()
            && self.step >= self.schedule[self.trajectory].steps.len()
        {
            self.trajectory += 1;
            self.step = 0;
        }
        if self.trajectory >= self.schedule.len() {
            return None;
        }
        let (t, s) = (self.trajectory, self.step);
        self.step += 1;
        let frame = self.produce(t, s);
        self.index += 1;
        Some(frame)
    }
}

/// One line of a session's `frames.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: String,
    pub reference: String,
    pub object_id: String,
    pub wrench: Wrench,
    pub contact: ContactState,
    pub seed: u64,
}

/// Writes `reference.pgm`, `frames/NNNNNN.pgm` and `frames.jsonl` under
/// `dir`. Returns the number of frames written.
pub fn write_session(
    dir: &Path,
    reference: &GrayImage,
    frames: impl Iterator<Item = Result<Frame>>,
    seed: u64,
) -> Result<usize> {
    fs::create_dir_all(dir.join("frames"))?;
    io::save_pgm(dir.join("reference.pgm"), reference)?;
    let mut manifest = BufWriter::new(fs::File::create(dir.join("frames.jsonl"))?);
    let mut count = 0;
    for frame in frames {
        let frame = frame?;
        let name = format!("frames/{:06}.pgm", frame.index);
        io::save_pgm(dir.join(&name), &frame.tactile)?;
        let rec = FrameRecord {
            frame: name,
            reference: "reference.pgm".into(),
            object_id: frame.object_id,
            wrench: frame.wrench,
            contact: frame.contact,
            seed,
        };
        serde_json::to_writer(&mut manifest, &rec)?;
        manifest.write_all(b"\n")?;
        count += 1;
    }
    manifest.flush()?;
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gelsim::{procedural_object, reference_image, ObjectShape, ObjectSpec};

    fn setup() -> (GelSpec, Vec<HeightField>, GrayImage, PixelScale) {
        let scale = PixelScale::new(0.06).unwrap();
        let obj = procedural_object(
            &ObjectSpec::new(ObjectShape::Sphere { radius: 3.0 }, scale.mm_per_pixel()),
            1,
        )
        .unwrap()
        .with_id("ball");
        (GelSpec::default(), vec![obj], reference_image(120, 90, 0), scale)
    }

    #[test]
    fn empty_schedule_is_empty_stream() {
        let (gel, objs, r, s) = setup();
        assert_eq!(simulate_session(&gel, &objs, &[], &r, s, &SessionConfig::default()).count(), 0);
    }

    #[test]
    fn single_step_matches_components() {
        let (gel, objs, r, s) = setup();
        let c = ContactState::press([60.0, 45.0], 0.8);
        let sched = vec![Trajectory { object: 0, steps: vec![c] }];
        let frames: Vec<Frame> = simulate_session(&gel, &objs, &sched, &r, s, &SessionConfig::default())
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(frames.len(), 1);
        let pre = indent(&gel, &objs[0], &c, s, r.dims()).unwrap();
        assert_eq!(frames[0].wrench, synthesize_wrench(&penetration(&pre, &gel), &gel, &c, s));
        assert_eq!(frames[0].object_id, "ball");
    }

    #[test]
    fn press_ramp_force_increases() {
        let (gel, objs, r, s) = setup();
        let steps = (1..=10).map(|k| ContactState::press([60.0, 45.0], 0.1 * k as f64)).collect();
        let sched = vec![Trajectory { object: 0, steps }];
        let fz: Vec<f64> = simulate_session(&gel, &objs, &sched, &r, s, &SessionConfig::default())
            .map(|f| f.unwrap().wrench.fz.abs())
            .collect();
        assert!(fz.windows(2).all(|w| w[1] > w[0]), "{fz:?}");
    }

    #[test]
    fn noisy_stream_is_deterministic() {
        let (gel, objs, r, s) = setup();
        let sched = vec![Trajectory {
            object: 0,
            steps: vec![ContactState::press([50.0, 40.0], 0.5), ContactState::default()],
        }];
        let cfg = SessionConfig { noise_std: 0.005, seed: 9, ..Default::default() };
        let a: Vec<Frame> = simulate_session(&gel, &objs, &sched, &r, s, &cfg).map(|f| f.unwrap()).collect();
        let b: Vec<Frame> = simulate_session(&gel, &objs, &sched, &r, s, &cfg).map(|f| f.unwrap()).collect();
        assert_eq!(a, b);
        assert_ne!(a[1].tactile, r);
    }

    #[test]
    fn zero_press_reproduces_reference_exactly() {
        let (gel, objs, r, s) = setup();
        let sched = vec![Trajectory { object: 0, steps: vec![ContactState::press([60.0, 45.0], 0.0)] }];
        let f = simulate_session(&gel, &objs, &sched, &r, s, &SessionConfig::default())
            .next()
            .unwrap()
            .unwrap();
        assert_eq!(f.tactile, r);
    }
}
