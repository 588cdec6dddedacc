//! Process exit codes and the mapping from errors onto them.

use std::fmt;

use canet::Error;

pub const IO: u8 = 1;
pub const CONFIG: u8 = 2;
pub const DATA: u8 = 3;
pub const TRAINING: u8 = 4;
/// The gradient suite ran but some case failed.
pub const CHECK_FAILED: u8 = 5;

/// Bad flag values that clap cannot reject on its own.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A failed check, reported after its output has been printed.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Exit code for an error chain; the first recognized cause decides.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return library_code(e);
        }
        if cause.is::<Usage>() || cause.is::<toml::de::Error>() || cause.is::<toml::ser::Error>() {
            return CONFIG;
        }
        if cause.is::<CheckFailed>() {
            return CHECK_FAILED;
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
    }
    IO
}

fn library_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => IO,
        Error::Config(_)
        | Error::SplitFraction(_)
        | Error::SyntheticSpec(_)
        | Error::TooFewVoters(_)
        | Error::Panel(_) => CONFIG,
        Error::Registry(_)
        | Error::Windowing(_)
        | Error::Graph(_)
        | Error::DegenerateBbox { .. }
        | Error::WidthMismatch { .. }
        | Error::UnknownLabel { .. }
        | Error::MissingFile { .. }
        | Error::Manifest(_)
        | Error::SegmentFormat { .. }
        | Error::TooFewSegments(_)
        | Error::EmptyTrainingSet
        | Error::EmptyEvaluation
        | Error::LabelOutOfRange { .. }
        | Error::VersionMismatch { .. }
        | Error::DimMismatch(_)
        | Error::CorruptModel(_)
        | Error::Csv(_)
        | Error::Json(_) => DATA,
        Error::Shape { .. }
        | Error::InvalidTensor(_)
        | Error::NonFinite(_)
        | Error::NotScalar(_) => TRAINING,
    }
}
