package org.example.dfs.datanode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class BlockScanner {
    private static final Logger LOG = LoggerFactory.getLogger(BlockScanner.class);

    private final FsDataset dataset;

    public BlockScanner(FsDataset dataset) {
        this.dataset = dataset;
    }

    public void scan(Block block, int depth) {
        if (depth <= 0) {
            return;
        }
        if (!dataset.isValid(block)) {
            LOG.warn("Block " + block + " is in invalid state, skipping scan");
            return;
        }
        LOG.debug("Scanning block " + block);
        scan(block, depth - 1);
    }
}
