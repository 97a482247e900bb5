//! Project workspaces and the proof-assistant REPL protocol.

pub mod repl;
pub mod workspace;

pub use repl::{
    check_file, open_session, parse_frame, Backend, Position, ProcessSession, RealReplConfig,
    ReplCommand, ReplMessage, ReplRequest, ReplResponse, ReplSession, ReplSorry, ScriptEntry,
    ScriptedSession, SessionError, Severity, DEFAULT_REQUEST_TIMEOUT,
};
pub use workspace::{
    build_workspace, parse_toolchain, BuildMode, BuildState, Builder, Workspace, WorkspaceCache,
    WorkspaceError, CACHE_DIR_ENV, DEFAULT_BUILD_TIMEOUT,
};
