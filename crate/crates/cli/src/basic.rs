//! Single-artifact subcommands: otsu, slic, refine.

use pa_forge::io::{load_label_map, load_mask, load_rgb, load_tensor, save_label_map, save_mask, tensor_to_map};
use pa_forge::lowlevel::{binarize, otsu_threshold, slic as run_slic, SlicParams};
use pa_forge::refine::{refine_mask, RefineParams};

use crate::{CliResult, OtsuArgs, RefineArgs, RefineOpts, SlicArgs, SlicOpts};

impl RefineOpts {
    pub fn params(&self) -> CliResult<RefineParams> {
        let params = RefineParams {
            alpha: self.alpha,
            beta: self.beta,
            overlap_mode: self.mode.parse()?,
        };
        params.validate()?;
        Ok(params)
    }
}

impl SlicOpts {
    pub fn params(&self) -> SlicParams {
        SlicParams {
            k: self.k,
            compactness: self.compactness,
            ..SlicParams::default()
        }
    }
}

pub fn otsu(a: &OtsuArgs) -> CliResult {
    let map = tensor_to_map(&load_tensor(&a.input)?)?;
    let r = otsu_threshold(&map)?;
    out!("threshold\t{}", r.threshold);
    out!("bin\t{}", r.bin);
    out!("variance\t{}", r.between_class_variance);
    if let Some(out) = &a.out {
        save_mask(&binarize(&map, r.threshold), out)?;
    }
    Ok(())
}

pub fn slic(a: &SlicArgs) -> CliResult {
    let img = load_rgb(&a.image)?;
    let sp = run_slic(&img, &a.slic.params())?;
    save_label_map(&sp, &a.out)?;
    out!("regions\t{}", sp.region_count());
    Ok(())
}

pub fn refine(a: &RefineArgs) -> CliResult {
    let params = a.refine.params()?;
    let mask = load_mask(&a.mask)?;
    let sp = match (&a.labels, &a.image) {
        (Some(l), _) => load_label_map(l)?,
        (None, Some(img)) => run_slic(&load_rgb(img)?, &SlicParams::with_k(a.k))?,
        (None, None) => unreachable!("clap requires --labels or --image"),
    };
    let (refined, report) = refine_mask(&mask, &sp, &params)?;
    save_mask(&refined, &a.out)?;
    for r in &report.regions {
        out!("{} {} {} {}", r.region, r.overlap, r.area_ratio, r.selected as u8);
    }
    Ok(())
}
