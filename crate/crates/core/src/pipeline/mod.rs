//! Stage orchestration from parsed records to report artifacts.

pub mod fit;
pub mod measure;
pub mod report;
pub mod stages;
pub mod svg;
