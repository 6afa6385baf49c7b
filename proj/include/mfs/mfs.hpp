#ifndef MFS_MFS_HPP
#define MFS_MFS_HPP

#include "mfs/data.hpp"
#include "mfs/dataset.hpp"
#include "mfs/error.hpp"
#include "mfs/forcing_set.hpp"
#include "mfs/harness.hpp"
#include "mfs/model.hpp"
#include "mfs/report.hpp"
#include "mfs/solver.hpp"

#endif  // MFS_MFS_HPP
