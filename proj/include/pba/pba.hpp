#pragma once

#include "pba/anonymizer.hpp"
#include "pba/corpus.hpp"
#include "pba/embedder.hpp"
#include "pba/entity.hpp"
#include "pba/error.hpp"
#include "pba/fairness.hpp"
#include "pba/gazetteer.hpp"
#include "pba/markers.hpp"
#include "pba/pipeline.hpp"
#include "pba/random.hpp"
#include "pba/remote.hpp"
#include "pba/report.hpp"
#include "pba/scorer.hpp"
#include "pba/text.hpp"
