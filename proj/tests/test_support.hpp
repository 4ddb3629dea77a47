#pragma once

// torch's glog-compatible logging macros (c10) collide with doctest's short
// assertion names. Pull torch in first, drop the loggers, then let doctest
// define its own. Include this before any project header.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#undef DCHECK
#undef DCHECK_EQ
#undef DCHECK_NE
#undef DCHECK_LE
#undef DCHECK_LT
#undef DCHECK_GE
#undef DCHECK_GT

#include "doctest.h"
