//! In-memory placement sessions and the jobs that run on them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scenemask::bundle::{encode_png, load_bundle, parse_ply, BundleError, ObjectCloud, SceneBundle};
use scenemask::propagation::{propagate_trajectory_with_progress, PlacementTrajectory, PropagationConfig};
use scenemask::render::export::write_results;
use scenemask::render::{composite_preview, depth_visualization, render_sequence_with_progress, MaskSequence, RenderConfig};
use scenemask::RigidPlacement;

use crate::pool::WorkerPool;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub workers: usize,
    pub session_limit: usize,
    pub propagation: PropagationConfig,
    pub render: RenderConfig,
    /// Upper bound on points returned by the scene endpoint; the stride is
    /// raised until the frame fits.
    pub scene_max_points: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: 2,
            session_limit: 16,
            propagation: PropagationConfig::default(),
            render: RenderConfig::default(),
            scene_max_points: 100_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Short machine-readable tag for API responses.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not-found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Validation(_) => "validation",
            ServiceError::ResourceLimit(_) => "resource-limit",
            ServiceError::Bundle(BundleError::MissingComponent(_)) => "missing-component",
            ServiceError::Bundle(_) => "bundle",
            ServiceError::Internal(_) => "internal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Idle,
    Propagating,
    Rendering,
    Done,
    Error,
}

impl SessionStatus {
    fn is_running(self) -> bool {
        matches!(self, SessionStatus::Propagating | SessionStatus::Rendering)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Propagate,
    Render,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobPhase {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    pub job_id: String,
    pub session_id: String,
    pub kind: JobKind,
    pub phase: JobPhase,
    pub completed: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Session revision holding this job's results, once done.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}

impl JobProgress {
    pub fn is_finished(&self) -> bool {
        matches!(self.phase, JobPhase::Done | JobPhase::Failed)
    }
}

/// Where a session's object comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSource {
    /// A PLY file on disk.
    Path(PathBuf),
    /// An object stored in the bundle, by name.
    Bundled(String),
    /// The bundle's first object by name.
    Default,
}

struct Session {
    bundle: Arc<SceneBundle>,
    object: Arc<ObjectCloud>,
    bundle_path: PathBuf,
    placement: RigidPlacement,
    trajectory: Option<Arc<PlacementTrajectory>>,
    masks: Option<Arc<MaskSequence>>,
    render_config: RenderConfig,
    status: SessionStatus,
    revision: u64,
    job: Option<String>,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub revision: u64,
    pub bundle_path: PathBuf,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub object_points: usize,
    pub placement: RigidPlacement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<serde_json::Value>,
    pub has_masks: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_point_counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_job: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overlay {
    None,
    Mask,
    #[default]
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub out_dir: PathBuf,
    pub revision: u64,
    pub frame_count: usize,
}

/// Scene points of one frame, thinned for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCloud {
    pub frame: usize,
    pub stride: usize,
    pub count: usize,
    pub points: Vec<[f32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<[u8; 3]>>,
}

impl SceneCloud {
    /// `count: u32`, then per point `x, y, z: f32` and `r, g, b: u8`, all
    /// little-endian. Points without color are written as white.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.count * 15);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        for (i, p) in self.points.iter().enumerate() {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
            let rgb = self.colors.as_ref().map_or([255; 3], |c| c[i]);
            out.extend_from_slice(&rgb);
        }
        out
    }
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Session>>,
    jobs: Mutex<HashMap<String, JobProgress>>,
    pool: WorkerPool,
}

/// Cheap to clone; all clones share the same sessions and worker pool.
#[derive(Clone)]
pub struct SessionManager {
    inner: Arc<Inner>,
}

impl SessionManager {
    pub fn new(config: ServiceConfig) -> Self {
        let pool = WorkerPool::new(config.workers);
        SessionManager {
            inner: Arc::new(Inner {
                config,
                sessions: Mutex::new(HashMap::new()),
                jobs: Mutex::new(HashMap::new()),
                pool,
            }),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.inner.sessions.lock().expect("session table lock")
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, HashMap<String, JobProgress>> {
        self.inner.jobs.lock().expect("job table lock")
    }

    fn check_capacity(&self, sessions: &HashMap<String, Session>) -> Result<(), ServiceError> {
        if sessions.len() >= self.inner.config.session_limit {
            return Err(ServiceError::ResourceLimit(format!(
                "session limit of {} reached",
                self.inner.config.session_limit
            )));
        }
        Ok(())
    }

    /// Loads the bundle and object and opens a session with the object 1 m in
    /// front of the frame-0 camera.
    pub fn create_session(&self, bundle_path: &Path, object: &ObjectSource) -> Result<SessionView, ServiceError> {
        self.check_capacity(&self.sessions())?;
        let bundle = load_bundle(bundle_path)?;
        let object = match object {
            ObjectSource::Path(p) => {
                let bytes = std::fs::read(p).map_err(|source| BundleError::Io { path: p.clone(), source })?;
                parse_ply(&bytes)?
            }
            ObjectSource::Bundled(name) => bundle
                .objects
                .get(name)
                .cloned()
                .ok_or_else(|| ServiceError::Validation(format!("bundle has no object named {name:?}")))?,
            ObjectSource::Default => bundle
                .objects
                .values()
                .next()
                .cloned()
                .ok_or_else(|| ServiceError::Validation("bundle has no objects; pass an object path".into()))?,
        };
        if object.is_empty() {
            return Err(ServiceError::Validation("object cloud is empty".into()));
        }
        let pose = &bundle.poses[0];
        let placement = RigidPlacement::identity().translated(&(pose.center() + pose.optical_axis()));
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session {
            bundle: Arc::new(bundle),
            object: Arc::new(object),
            bundle_path: bundle_path.to_path_buf(),
            placement,
            trajectory: None,
            masks: None,
            render_config: self.inner.config.render,
            status: SessionStatus::Idle,
            revision: 0,
            job: None,
            error: None,
        };
        let mut sessions = self.sessions();
        self.check_capacity(&sessions)?;
        let view = view(&id, &session);
        sessions.insert(id.clone(), session);
        tracing::info!(session = %id, bundle = %bundle_path.display(), "session created");
        Ok(view)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let sessions = self.sessions();
        let s = sessions.get(id).ok_or_else(|| not_found(id))?;
        Ok(view(id, s))
    }

    pub fn delete_session(&self, id: &str) -> Result<(), ServiceError> {
        let mut sessions = self.sessions();
        match sessions.get(id) {
            None => Err(not_found(id)),
            Some(s) if s.status.is_running() => Err(ServiceError::Conflict("a job is running".into())),
            Some(_) => {
                sessions.remove(id);
                Ok(())
            }
        }
    }

    /// Replaces the placement and drops any results derived from the old one.
    pub fn set_placement(&self, id: &str, placement: RigidPlacement) -> Result<u64, ServiceError> {
        let placement = RigidPlacement::new(placement.scale, placement.rotation, placement.translation)
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
        let mut sessions = self.sessions();
        let s = sessions.get_mut(id).ok_or_else(|| not_found(id))?;
        if s.status.is_running() {
            return Err(ServiceError::Conflict(format!("session is {:?}", s.status)));
        }
        s.placement = placement;
        s.trajectory = None;
        s.masks = None;
        s.error = None;
        s.status = SessionStatus::Idle;
        s.revision += 1;
        Ok(s.revision)
    }

    pub fn get_placement(&self, id: &str) -> Result<(RigidPlacement, u64), ServiceError> {
        let sessions = self.sessions();
        let s = sessions.get(id).ok_or_else(|| not_found(id))?;
        Ok((s.placement, s.revision))
    }

    pub fn run_propagation(&self, id: &str, config: Option<PropagationConfig>) -> Result<String, ServiceError> {
        let config = config.unwrap_or(self.inner.config.propagation);
        config.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        let (job_id, bundle, object, placement, revision) = {
            let mut sessions = self.sessions();
            let s = sessions.get_mut(id).ok_or_else(|| not_found(id))?;
            if s.status.is_running() {
                return Err(ServiceError::Conflict(format!("session is {:?}", s.status)));
            }
            let job_id = self.register_job(id, JobKind::Propagate, s.bundle.frame_count());
            s.status = SessionStatus::Propagating;
            s.job = Some(job_id.clone());
            s.trajectory = None;
            s.masks = None;
            s.error = None;
            s.revision += 1;
            (job_id, s.bundle.clone(), s.object.clone(), s.placement, s.revision)
        };
        let manager = self.clone();
        let (sid, jid) = (id.to_string(), job_id.clone());
        self.inner.pool.submit(move || {
            manager.set_phase(&jid, JobPhase::Running);
            let result = propagate_trajectory_with_progress(&placement, &object, &bundle, &config, |n| {
                manager.set_completed(&jid, n)
            });
            let result = result.map(|traj| (Some(Arc::new(traj)), None, None)).map_err(|e| e.to_string());
            manager.finish(&sid, &jid, revision, result);
        });
        Ok(job_id)
    }

    pub fn run_render(&self, id: &str, config: Option<RenderConfig>) -> Result<String, ServiceError> {
        let config = config.unwrap_or(self.inner.config.render);
        config.validate().map_err(|e| ServiceError::Validation(e.to_string()))?;
        let (job_id, bundle, object, trajectory, revision) = {
            let mut sessions = self.sessions();
            let s = sessions.get_mut(id).ok_or_else(|| not_found(id))?;
            if s.status.is_running() {
                return Err(ServiceError::Conflict(format!("session is {:?}", s.status)));
            }
            let Some(trajectory) = s.trajectory.clone() else {
                return Err(ServiceError::Conflict("render requires a propagated trajectory".into()));
            };
            let job_id = self.register_job(id, JobKind::Render, s.bundle.frame_count());
            s.status = SessionStatus::Rendering;
            s.job = Some(job_id.clone());
            s.masks = None;
            s.error = None;
            s.revision += 1;
            (job_id, s.bundle.clone(), s.object.clone(), trajectory, s.revision)
        };
        let manager = self.clone();
        let (sid, jid) = (id.to_string(), job_id.clone());
        self.inner.pool.submit(move || {
            manager.set_phase(&jid, JobPhase::Running);
            let result = render_sequence_with_progress(&object, &trajectory, &bundle, &config, |n| {
                manager.set_completed(&jid, n)
            });
            let result = result
                .map(|masks| (Some(trajectory), Some(Arc::new(masks)), Some(config)))
                .map_err(|e| e.to_string());
            manager.finish(&sid, &jid, revision, result);
        });
        Ok(job_id)
    }

    fn register_job(&self, session_id: &str, kind: JobKind, total: usize) -> String {
        let job_id = uuid::Uuid::new_v4().simple().to_string();
        self.jobs().insert(
            job_id.clone(),
            JobProgress {
                job_id: job_id.clone(),
                session_id: session_id.to_string(),
                kind,
                phase: JobPhase::Queued,
                completed: 0,
                total,
                error: None,
                revision: None,
            },
        );
        job_id
    }

    fn set_phase(&self, job_id: &str, phase: JobPhase) {
        if let Some(j) = self.jobs().get_mut(job_id) {
            j.phase = phase;
        }
    }

    fn set_completed(&self, job_id: &str, completed: usize) {
        if let Some(j) = self.jobs().get_mut(job_id) {
            j.completed = completed.min(j.total);
        }
    }

    #[allow(clippy::type_complexity)]
    fn finish(
        &self,
        session_id: &str,
        job_id: &str,
        started_revision: u64,
        result: Result<
            (Option<Arc<PlacementTrajectory>>, Option<Arc<MaskSequence>>, Option<RenderConfig>),
            String,
        >,
    ) {
        // The session is updated before the job so that a client seeing the
        // job finished also sees its results.
        let outcome = {
            let mut sessions = self.sessions();
            match sessions.get_mut(session_id) {
                Some(s) if s.revision == started_revision && s.job.as_deref() == Some(job_id) => {
                    s.job = None;
                    s.revision += 1;
                    match &result {
                        Ok((trajectory, masks, render_config)) => {
                            s.trajectory = trajectory.clone();
                            s.masks = masks.clone();
                            if let Some(c) = render_config {
                                s.render_config = *c;
                            }
                            s.status = SessionStatus::Done;
                        }
                        Err(e) => {
                            s.status = SessionStatus::Error;
                            s.error = Some(e.clone());
                        }
                    }
                    Ok(s.revision)
                }
                _ => Err("session changed while the job ran; results discarded".to_string()),
            }
        };
        let mut jobs = self.jobs();
        if let Some(j) = jobs.get_mut(job_id) {
            match (outcome, result) {
                (Ok(rev), Ok(_)) => {
                    j.phase = JobPhase::Done;
                    j.completed = j.total;
                    j.revision = Some(rev);
                }
                (Ok(_), Err(e)) | (Err(e), _) => {
                    j.phase = JobPhase::Failed;
                    j.error = Some(e);
                }
            }
        }
    }

    pub fn get_job(&self, job_id: &str) -> Result<JobProgress, ServiceError> {
        self.jobs()
            .get(job_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("job {job_id}")))
    }

    /// Blocks until the job finishes, polling every few milliseconds.
    pub fn wait_for_job(&self, job_id: &str) -> Result<JobProgress, ServiceError> {
        loop {
            let job = self.get_job(job_id)?;
            if job.is_finished() {
                return Ok(job);
            }
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
    }

    /// PNG of frame `t`. `Composite` falls back to the raw frame while no
    /// masks exist; frames without RGB use a depth visualization.
    pub fn preview(&self, id: &str, t: usize, overlay: Overlay) -> Result<(Vec<u8>, u64), ServiceError> {
        let (bundle, masks, revision) = {
            let sessions = self.sessions();
            let s = sessions.get(id).ok_or_else(|| not_found(id))?;
            (s.bundle.clone(), s.masks.clone(), s.revision)
        };
        let frame_count = bundle.frame_count();
        if t >= frame_count {
            return Err(ServiceError::Validation(format!("frame {t} out of range 0..{frame_count}")));
        }
        let base = || bundle.rgb(t).cloned().unwrap_or_else(|| depth_visualization(&bundle.depths[t]));
        let png = match (overlay, &masks) {
            (Overlay::None, _) => encode_png(&base()),
            (Overlay::Mask, Some(m)) => encode_png(&m.masks[t].to_image()),
            (Overlay::Mask, None) => return Err(ServiceError::Conflict("no masks rendered".into())),
            (Overlay::Composite, Some(m)) => match &m.previews {
                Some(p) => encode_png(&p[t]),
                None => encode_png(&composite_preview(&base(), &m.masks[t])),
            },
            (Overlay::Composite, None) => encode_png(&base()),
        };
        Ok((png, revision))
    }

    /// The session's object cloud in object coordinates.
    pub fn object(&self, id: &str) -> Result<(Arc<ObjectCloud>, RigidPlacement, u64), ServiceError> {
        let sessions = self.sessions();
        let s = sessions.get(id).ok_or_else(|| not_found(id))?;
        Ok((s.object.clone(), s.placement, s.revision))
    }

    /// Scene points of frame `t`, keeping every `stride`-th point.
    pub fn scene(&self, id: &str, t: usize, stride: Option<usize>) -> Result<SceneCloud, ServiceError> {
        let bundle = {
            let sessions = self.sessions();
            sessions.get(id).ok_or_else(|| not_found(id))?.bundle.clone()
        };
        if t >= bundle.frame_count() {
            return Err(ServiceError::Validation(format!("frame {t} out of range 0..{}", bundle.frame_count())));
        }
        let pts = &bundle.scene_points[t].points;
        let max = self.inner.config.scene_max_points.max(1);
        let stride = stride.unwrap_or(1).max(1).max(pts.len().div_ceil(max));
        let kept: Vec<_> = pts.iter().step_by(stride).collect();
        let colors = kept.iter().map(|p| p.color).collect::<Option<Vec<_>>>();
        Ok(SceneCloud {
            frame: t,
            stride,
            count: kept.len(),
            points: kept.iter().map(|p| p.position.map(|c| c as f32).into()).collect(),
            colors,
        })
    }

    /// Writes masks, previews, trajectory and placement under `out_dir`.
    pub fn export(&self, id: &str, out_dir: &Path) -> Result<ExportSummary, ServiceError> {
        let (placement, trajectory, masks, config, revision) = {
            let sessions = self.sessions();
            let s = sessions.get(id).ok_or_else(|| not_found(id))?;
            match (&s.status, &s.trajectory, &s.masks) {
                (SessionStatus::Done, Some(t), Some(m)) => (s.placement, t.clone(), m.clone(), s.render_config, s.revision),
                _ => return Err(ServiceError::Conflict("export requires rendered masks".into())),
            }
        };
        write_results(out_dir, &placement, &trajectory, &masks, &config)?;
        Ok(ExportSummary {
            out_dir: out_dir.to_path_buf(),
            revision,
            frame_count: masks.len(),
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions().len()
    }
}

fn not_found(id: &str) -> ServiceError {
    ServiceError::NotFound(format!("session {id}"))
}

fn view(id: &str, s: &Session) -> SessionView {
    let k = &s.bundle.intrinsics;
    SessionView {
        id: id.to_string(),
        status: s.status,
        revision: s.revision,
        bundle_path: s.bundle_path.clone(),
        frame_count: s.bundle.frame_count(),
        width: k.width,
        height: k.height,
        object_points: s.object.len(),
        placement: s.placement,
        trajectory: s
            .trajectory
            .as_ref()
            .map(|t| serde_json::from_str(&t.to_json()).expect("trajectory JSON")),
        has_masks: s.masks.is_some(),
        visible_point_counts: s.masks.as_ref().map(|m| m.visible_point_counts.clone()),
        active_job: s.job.clone(),
        error: s.error.clone(),
    }
}
