//! Builds an OpenSearch catalog request for Sentinel-3 OLCI scenes over
//! Romania in summer 2018.

use terraseg::geo::WktGeometry;
use terraseg::pipeline::query::parse_timestamp;
use terraseg::pipeline::{build_catalog_query, CatalogQuery, SortOrder};

fn main() -> terraseg::Result<()> {
    let (x0, x1, y0, y1) = (16.58910503349143, 26.95841113834191, 43.400842665330345, 49.09541206485471);
    let q = CatalogQuery {
        sensing: Some((parse_timestamp("2018-06-01", false)?, parse_timestamp("2018-09-01", true)?)),
        platform: Some("Sentinel-3".into()),
        filename: Some("S3B_*".into()),
        product_type: Some("OL_1_EFR___".into()),
        instrument: Some("OLCI".into()),
        footprint: Some(WktGeometry::polygon(vec![vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]])?),
        sort: Some(("ingestiondate".into(), SortOrder::Desc)),
        ..CatalogQuery::default()
    };
    println!("{}", build_catalog_query(&q)?);

    let bad = CatalogQuery { limit: 0, ..q };
    println!("limit 0: {}", build_catalog_query(&bad).unwrap_err());
    Ok(())
}
