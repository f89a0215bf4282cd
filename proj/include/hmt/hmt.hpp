#pragma once

#include "hmt/attention.hpp"
#include "hmt/curves.hpp"
#include "hmt/grouping.hpp"
#include "hmt/numerics.hpp"
#include "hmt/parallel.hpp"
#include "hmt/pipeline.hpp"
#include "hmt/ssm.hpp"
#include "hmt/synthetic.hpp"
#include "hmt/voxel_gen.hpp"
#include "hmt/voxel_grid.hpp"
